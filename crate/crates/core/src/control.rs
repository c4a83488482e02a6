//! Krotov optimization of piecewise-constant control pulses.
//!
//! With `H(t) = diag(E) - epsilon(t) X` and the yield `|<target|Psi(T)>|^2`,
//! the zeroth-order update on interval `i` is
//! `epsilon_i = -Im<chi(t_i)|X|Psi(t_i)> / lambda(t_i)`, where `chi` is the
//! target projection propagated backwards with the previous control and
//! `Psi` the state propagated forwards with the controls already updated.
//! The structure penalty replaces the division by `lambda` with a solve
//! against `diag(lambda) + lambda1 P_good + lambda2 P_bad` on the whole time
//! grid.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use ndarray_linalg::c64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::{inner, norm, EigenSystem, PropagationOptions, PulseWaveform};
use crate::error::{Error, Result};

/// Cap on `lambda(t)` where the envelope profiles diverge.
pub const LAMBDA_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    #[default]
    Energy,
    Structure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LambdaProfile {
    #[default]
    Constant,
    InverseSin2,
    InverseSin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    pub lambda_profile: LambdaProfile,
    pub lambda: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Number of lowest eigenstates whose transition frequencies span the good subspace.
    pub structure_states: usize,
    pub backward_update: bool,
    /// Angular frequency above which the final pulse is filtered out.
    pub lowpass_cutoff: Option<f64>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            kind: PenaltyKind::Energy,
            lambda_profile: LambdaProfile::Constant,
            lambda: 1.0,
            lambda1: 0.0,
            lambda2: 10.0,
            structure_states: 10,
            backward_update: false,
            lowpass_cutoff: None,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if self.kind == PenaltyKind::Structure {
            if !(self.lambda + self.lambda1 >= 0.0) {
                return Err(Error::invalid("lambda1", "lambda + lambda1 must be non-negative"));
            }
            if !(self.lambda2 > 0.0 && self.lambda2 > self.lambda1) {
                return Err(Error::invalid("lambda2", "bad directions must be penalized more than good ones"));
            }
            if self.structure_states < 2 {
                return Err(Error::invalid("structure_states", "need at least two states"));
            }
        }
        if let Some(c) = self.lowpass_cutoff {
            if !(c > 0.0) {
                return Err(Error::invalid("lowpass_cutoff", "must be positive"));
            }
        }
        Ok(())
    }

    /// `lambda(t)` including the envelope profile, capped at [`LAMBDA_CAP`].
    pub fn lambda_at(&self, t: f64, duration: f64) -> f64 {
        let s = (PI * t / duration).sin().abs();
        let v = match self.lambda_profile {
            LambdaProfile::Constant => self.lambda,
            LambdaProfile::InverseSin2 => self.lambda / (s * s),
            LambdaProfile::InverseSin => self.lambda / s,
        };
        if v.is_finite() {
            v.min(LAMBDA_CAP)
        } else {
            LAMBDA_CAP
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub initial_state: Array1<c64>,
    pub target_state: Array1<c64>,
    pub duration: f64,
    pub dt: f64,
    pub penalty: PenaltyConfig,
    pub initial_guess: PulseWaveform,
    pub max_iterations: usize,
    pub target_yield: f64,
}

impl ControlProblem {
    pub fn validate(&self, dim: usize) -> Result<()> {
        for (name, v) in [("initial_state", &self.initial_state), ("target_state", &self.target_state)] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch(format!("{name} has {} entries, system {dim}", v.len())));
            }
            if (norm(v) - 1.0).abs() > 1e-8 {
                return Err(Error::invalid(name, "not normalized"));
            }
        }
        if !(self.duration > 0.0) {
            return Err(Error::invalid("duration", "must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(self.target_yield > 0.0 && self.target_yield <= 1.0) {
            return Err(Error::invalid("target_yield", "must be in (0, 1]"));
        }
        if (self.initial_guess.duration - self.duration).abs() > 1e-9 * self.duration
            || (self.initial_guess.dt - self.dt).abs() > 1e-12 * self.dt
        {
            return Err(Error::invalid("initial_guess", "grid differs from duration/dt"));
        }
        self.penalty.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPulse {
    /// Best pulse found (not necessarily the last iterate).
    pub pulse: PulseWaveform,
    /// Yield of every iterate, starting with the initial guess.
    pub yield_history: Vec<f64>,
    /// `int epsilon^2 dt` of every iterate.
    pub fluence_history: Vec<f64>,
    /// Yield of `pulse`.
    pub final_yield: f64,
    pub best_iteration: usize,
    pub iterations_used: usize,
    /// Retained rank of the good subspace (structure penalty only).
    pub good_rank: Option<usize>,
    /// Yield before low-pass filtering, when a cutoff was applied.
    pub unfiltered_yield: Option<f64>,
}

/// Orthonormal basis of the "good" control subspace on the control grid.
#[derive(Debug, Clone)]
pub struct StructureSubspace {
    /// `N x r`, orthonormal columns.
    pub basis: Array2<f64>,
    pub requested: usize,
}

impl StructureSubspace {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project_good(&self, u: &Array1<f64>) -> Array1<f64> {
        self.basis.dot(&self.basis.t().dot(u))
    }

    pub fn project_bad(&self, u: &Array1<f64>) -> Array1<f64> {
        u - &self.project_good(u)
    }

    /// Dense projector onto the good subspace.
    pub fn good_projector(&self) -> Array2<f64> {
        self.basis.dot(&self.basis.t())
    }

    pub fn bad_projector(&self) -> Array2<f64> {
        Array2::eye(self.basis.nrows()) - self.good_projector()
    }
}

/// Midpoints of the control intervals.
fn control_times(duration: f64, dt: f64) -> Vec<f64> {
    let n = crate::dynamics::interval_count(duration, dt);
    (0..n).map(|i| {
        let t0 = i as f64 * dt;
        t0 + 0.5 * (duration - t0).min(dt)
    }).collect()
}

/// Span of `f_ij(t) = sin^2(pi t / T) cos((E_i - E_j) t)` for all pairs of
/// the supplied energies, orthonormalized by modified Gram-Schmidt with
/// dependent vectors dropped.
pub fn structure_subspace(energies: &[f64], duration: f64, dt: f64) -> Result<StructureSubspace> {
    if energies.len() < 2 {
        return Err(Error::invalid("energies", "need at least two energies"));
    }
    if !(duration > 0.0 && dt > 0.0) {
        return Err(Error::invalid("dt", "duration and dt must be positive"));
    }
    let times = control_times(duration, dt);
    let n = times.len();
    let mut kept: Vec<Array1<f64>> = Vec::new();
    let mut requested = 0;
    for i in 0..energies.len() {
        for j in 0..i {
            requested += 1;
            let w = energies[i] - energies[j];
            let f = Array1::from_iter(times.iter().map(|&t| (PI * t / duration).sin().powi(2) * (w * t).cos()));
            let n0 = f.dot(&f).sqrt();
            if n0 == 0.0 {
                continue;
            }
            let mut v = f;
            for _ in 0..2 {
                for q in &kept {
                    let c = q.dot(&v);
                    v.scaled_add(-c, q);
                }
            }
            let n1 = v.dot(&v).sqrt();
            if n1 > 1e-8 * n0 {
                kept.push(v / n1);
            }
        }
    }
    let mut basis = Array2::zeros((n, kept.len()));
    for (k, v) in kept.into_iter().enumerate() {
        basis.column_mut(k).assign(&v);
    }
    Ok(StructureSubspace { basis, requested })
}

/// Sweep solver for `M u = g` with `M = diag(lambda(t)) + lambda1 P_good +
/// lambda2 P_bad`. Each call performs one Gauss-Seidel update of component
/// `i`, with the off-diagonal coupling evaluated on the latest controls, which
/// matches the interval-by-interval character of the Krotov sweep.
struct StructureSolver {
    q: Array2<f64>,
    diag: Array1<f64>,
    coupling: f64,
    // Q^T u for the current controls
    s: Array1<f64>,
}

impl StructureSolver {
    fn new(lambda: &[f64], penalty: &PenaltyConfig, sub: &StructureSubspace, u: &[f64]) -> Self {
        let q = sub.basis.clone();
        let coupling = penalty.lambda1 - penalty.lambda2;
        let diag = Array1::from_iter(
            lambda.iter().enumerate().map(|(i, l)| l + penalty.lambda2 + coupling * q.row(i).dot(&q.row(i))),
        );
        let s = q.t().dot(&ndarray::ArrayView1::from(u));
        StructureSolver { q, diag, coupling, s }
    }

    /// New `u_i` given the gradient `g_i` and the current `u_i`.
    fn update(&mut self, i: usize, g: f64, u_old: f64) -> f64 {
        let qi = self.q.row(i);
        let off = self.coupling * (qi.dot(&self.s) - qi.dot(&qi) * u_old);
        let u = (g - off) / self.diag[i];
        self.s.scaled_add(u - u_old, &qi);
        u
    }
}

/// `-Im<chi|X|psi>` for real `X`.
fn gradient_term(x: &Array2<f64>, chi: &Array1<c64>, psi: &Array1<c64>) -> f64 {
    let xr = x.dot(&psi.mapv(|v| v.re));
    let xi = x.dot(&psi.mapv(|v| v.im));
    let mut im = 0.0;
    for k in 0..chi.len() {
        // conj(chi) * (xr + i xi)
        im += chi[k].re * xi[k] - chi[k].im * xr[k];
    }
    -im
}

fn yield_of(target: &Array1<c64>, psi: &Array1<c64>) -> f64 {
    inner(target, psi).norm_sqr().min(1.0)
}

/// Forward propagation storing the state at every interval start.
fn forward_states(
    system: &EigenSystem,
    pulse: &PulseWaveform,
    initial: &Array1<c64>,
    tol: f64,
) -> Result<Vec<Array1<c64>>> {
    let mut out = Vec::with_capacity(pulse.len() + 1);
    let mut psi = initial.clone();
    out.push(psi.clone());
    for i in 0..pulse.len() {
        psi = system.evolve_constant(pulse.samples[i], &psi, pulse.interval(i).1, tol)?;
        out.push(psi.clone());
    }
    Ok(out)
}

/// Yield of a pulse for the given problem endpoints.
pub fn evaluate_yield(
    system: &EigenSystem,
    pulse: &PulseWaveform,
    initial: &Array1<c64>,
    target: &Array1<c64>,
    opts: &PropagationOptions,
) -> Result<f64> {
    let mut psi = initial.clone();
    for i in 0..pulse.len() {
        psi = system.evolve_constant(pulse.samples[i], &psi, pulse.interval(i).1, opts.rtol)?;
    }
    Ok(yield_of(target, &psi))
}

/// Runs Krotov iterations until the target yield or the iteration limit is
/// reached and returns the best iterate.
pub fn krotov_optimize(
    problem: &ControlProblem,
    system: &EigenSystem,
    opts: &PropagationOptions,
) -> Result<OptimizedPulse> {
    problem.validate(system.dim())?;
    let penalty = &problem.penalty;
    let tol = opts.rtol;
    let n = problem.initial_guess.len();
    let times = control_times(problem.duration, problem.dt);
    let lambda: Vec<f64> = times.iter().map(|&t| penalty.lambda_at(t, problem.duration)).collect();
    let subspace = match penalty.kind {
        PenaltyKind::Energy => None,
        PenaltyKind::Structure => {
            let k = penalty.structure_states.min(system.dim());
            let e: Vec<f64> = system.energies.iter().take(k).copied().collect();
            Some(structure_subspace(&e, problem.duration, problem.dt)?)
        }
    };

    let mut pulse = problem.initial_guess.clone();
    let mut states = forward_states(system, &pulse, &problem.initial_state, tol)?;
    let mut current_yield = yield_of(&problem.target_state, &states[n]);
    let mut history = vec![current_yield];
    let mut fluence = vec![pulse.fluence()];
    let mut best = (current_yield, 0usize, pulse.clone());
    let mut iterations = 0;

    while current_yield < problem.target_yield && iterations < problem.max_iterations {
        iterations += 1;
        let overlap = inner(&problem.target_state, &states[n]);
        let mut chi = problem.target_state.mapv(|v| v * overlap);
        let mut chis = vec![Array1::<c64>::zeros(0); n + 1];

        let mut solver = subspace.as_ref().map(|sub| StructureSolver::new(&lambda, penalty, sub, &pulse.samples));

        chis[n] = chi.clone();
        for i in (0..n).rev() {
            if penalty.backward_update {
                let g = gradient_term(&system.dipole, &chi, &states[i + 1]);
                let u = match solver.as_mut() {
                    Some(s) => s.update(i, g, pulse.samples[i]),
                    None => g / lambda[i],
                };
                if !u.is_finite() {
                    return Err(Error::NonFiniteControl { iteration: iterations });
                }
                pulse.samples[i] = u;
            }
            chi = system.evolve_constant(pulse.samples[i], &chi, -pulse.interval(i).1, tol)?;
            chis[i] = chi.clone();
        }

        let mut psi = problem.initial_state.clone();
        states[0] = psi.clone();
        for i in 0..n {
            let g = gradient_term(&system.dipole, &chis[i], &psi);
            let u = match solver.as_mut() {
                Some(s) => s.update(i, g, pulse.samples[i]),
                None => g / lambda[i],
            };
            if !u.is_finite() {
                return Err(Error::NonFiniteControl { iteration: iterations });
            }
            pulse.samples[i] = u;
            psi = system.evolve_constant(u, &psi, pulse.interval(i).1, tol)?;
            states[i + 1] = psi.clone();
        }
        current_yield = yield_of(&problem.target_state, &psi);
        history.push(current_yield);
        fluence.push(pulse.fluence());
        log::debug!("krotov iteration {iterations}: yield {current_yield:.8}");
        if current_yield > best.0 {
            best = (current_yield, iterations, pulse.clone());
        }
    }

    let (mut final_yield, best_iteration, mut best_pulse) = best;
    let mut unfiltered_yield = None;
    if let Some(cutoff) = penalty.lowpass_cutoff {
        let (filtered, passthrough) = lowpass_filter(&best_pulse, cutoff)?;
        if !passthrough {
            unfiltered_yield = Some(final_yield);
            final_yield = evaluate_yield(system, &filtered, &problem.initial_state, &problem.target_state, opts)?;
            best_pulse = filtered;
        }
    }
    Ok(OptimizedPulse {
        pulse: best_pulse,
        yield_history: history,
        fluence_history: fluence,
        final_yield,
        best_iteration,
        iterations_used: iterations,
        good_rank: subspace.map(|s| s.rank()),
        unfiltered_yield,
    })
}

fn fft_real(samples: &[f64]) -> Vec<rustfft::num_complex::Complex<f64>> {
    let mut buf: Vec<_> = samples.iter().map(|&v| rustfft::num_complex::Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Hard spectral truncation: removes every Fourier component with angular
/// frequency above `cutoff`. Returns the filtered pulse and `true` when the
/// cutoff is at or above the Nyquist frequency (pulse returned unchanged).
pub fn lowpass_filter(pulse: &PulseWaveform, cutoff: f64) -> Result<(PulseWaveform, bool)> {
    if !(cutoff > 0.0) {
        return Err(Error::invalid("cutoff", "must be positive"));
    }
    let n = pulse.len();
    if cutoff >= PI / pulse.dt || n == 0 {
        log::warn!("low-pass cutoff at or above Nyquist; pulse left unchanged");
        return Ok((pulse.clone(), true));
    }
    let mut spec = fft_real(&pulse.samples);
    let dw = 2.0 * PI / (n as f64 * pulse.dt);
    for (k, v) in spec.iter_mut().enumerate() {
        let kk = k.min(n - k);
        if kk as f64 * dw > cutoff {
            *v = rustfft::num_complex::Complex::new(0.0, 0.0);
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let samples = spec.iter().map(|v| v.re / n as f64).collect();
    Ok((PulseWaveform::new(pulse.dt, pulse.duration, samples)?, false))
}

/// Magnitude spectrum `|sum_k epsilon_k e^{-i w t_k}| dt` on the
/// non-negative angular frequencies `2 pi k / (N dt)`.
pub fn pulse_spectrum(pulse: &PulseWaveform) -> (Vec<f64>, Vec<f64>) {
    let n = pulse.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let spec = fft_real(&pulse.samples);
    let dw = 2.0 * PI / (n as f64 * pulse.dt);
    (0..=n / 2).map(|k| (k as f64 * dw, spec[k].norm() * pulse.dt)).unzip()
}
