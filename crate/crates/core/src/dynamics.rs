//! Time evolution in the field-free eigenbasis and in the adiabatic basis.
//!
//! Piecewise-constant pulses are propagated interval by interval with a
//! Taylor expansion of `exp(-i H dt)` whose order adapts to the requested
//! tolerance; the integrator therefore restarts at every control breakpoint.
//! Continuous fields and adiabatic switches use an embedded Dormand-Prince
//! 5(4) pair with step-size control.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use ndarray_linalg::c64;
use serde::{Deserialize, Serialize};

use crate::basis::TwoElectronBasis;
use crate::error::{Error, Result};
use crate::hermite::oscillator_functions;
use crate::model::Confinement;
use crate::spectrum::AdiabaticTable;

const I: c64 = c64 { re: 0.0, im: 1.0 };

/// A scalar control field `epsilon(t)` in internal field units.
pub trait ControlField: Sync {
    fn value(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> ControlField for F {
    fn value(&self, t: f64) -> f64 {
        self(t)
    }
}

/// Field held constant on intervals of length `dt`; the last interval may be
/// shorter so that the intervals exactly cover `[0, duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseWaveform {
    pub dt: f64,
    pub duration: f64,
    pub samples: Vec<f64>,
}

/// Number of intervals covering `duration`, tolerant to rounding in `duration / dt`.
pub fn interval_count(duration: f64, dt: f64) -> usize {
    let r = duration / dt;
    let n = r.round();
    if (r - n).abs() < 1e-9 * r.max(1.0) {
        n as usize
    } else {
        r.ceil() as usize
    }
}

impl PulseWaveform {
    pub fn new(dt: f64, duration: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::invalid("duration", "must be positive"));
        }
        let n = interval_count(duration, dt);
        if samples.len() != n {
            return Err(Error::DimensionMismatch(format!("{} samples for {} intervals", samples.len(), n)));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("samples", "non-finite field value"));
        }
        Ok(PulseWaveform { dt, duration, samples })
    }

    pub fn zeros(duration: f64, dt: f64) -> Result<Self> {
        Self::new(dt, duration, vec![0.0; interval_count(duration, dt)])
    }

    /// Samples `f` at the midpoint of every interval.
    pub fn from_fn(duration: f64, dt: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = interval_count(duration, dt);
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let (t0, len) = interval_bounds(i, dt, duration);
            samples.push(f(t0 + 0.5 * len));
        }
        Self::new(dt, duration, samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Start and length of interval `i`.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        interval_bounds(i, self.dt, self.duration)
    }

    /// Time-reversed copy: `epsilon_R(t) = epsilon(T - t)`. Exact when the
    /// duration is a whole number of intervals.
    pub fn time_reversed(&self) -> PulseWaveform {
        let mut samples = self.samples.clone();
        samples.reverse();
        PulseWaveform { dt: self.dt, duration: self.duration, samples }
    }

    /// `int epsilon^2 dt`.
    pub fn fluence(&self) -> f64 {
        (0..self.len()).map(|i| self.samples[i].powi(2) * self.interval(i).1).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Two-column text: interval start time and field value, times scaled by
    /// `time_scale` and fields by `field_scale`.
    pub fn to_text(&self, time_scale: f64, field_scale: f64, header: &str) -> String {
        let mut out = String::new();
        for line in header.lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "# duration {:.17e}", self.duration * time_scale);
        for (i, v) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{:.17e} {:.17e}", self.interval(i).0 * time_scale, v * field_scale);
        }
        out
    }

    /// Inverse of [`PulseWaveform::to_text`].
    pub fn from_text(text: &str, time_scale: f64, field_scale: f64) -> Result<Self> {
        let mut duration = None;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("duration") {
                    duration = v.trim().parse::<f64>().ok().map(|d| d / time_scale);
                }
                continue;
            }
            let mut cols = line.split_whitespace().map(str::parse::<f64>);
            match (cols.next(), cols.next()) {
                (Some(Ok(t)), Some(Ok(v))) => {
                    times.push(t / time_scale);
                    values.push(v / field_scale);
                }
                _ => return Err(Error::config(format!("line {}", lineno + 1), "expected two numeric columns")),
            }
        }
        if times.len() < 2 {
            return Err(Error::config("pulse", "need at least two samples"));
        }
        let dt = times[1] - times[0];
        for (i, t) in times.iter().enumerate() {
            if (t - i as f64 * dt).abs() > 1e-9 * dt.abs().max(1.0) * (i as f64 + 1.0) {
                return Err(Error::config(format!("sample {i}"), "times are not uniformly spaced"));
            }
        }
        let duration = duration.unwrap_or(dt * times.len() as f64);
        Self::new(dt, duration, values)
    }

    pub fn write(&self, path: &Path, time_scale: f64, field_scale: f64, header: &str) -> Result<()> {
        std::fs::write(path, self.to_text(time_scale, field_scale, header))?;
        Ok(())
    }

    pub fn read(path: &Path, time_scale: f64, field_scale: f64) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?, time_scale, field_scale)
    }
}

impl ControlField for PulseWaveform {
    fn value(&self, t: f64) -> f64 {
        if self.samples.is_empty() || t < 0.0 || t > self.duration {
            return 0.0;
        }
        let i = ((t / self.dt).floor() as usize).min(self.samples.len() - 1);
        self.samples[i]
    }
}

fn interval_bounds(i: usize, dt: f64, duration: f64) -> (f64, f64) {
    let t0 = i as f64 * dt;
    (t0, (duration - t0).min(dt))
}

/// `amplitude * sin^2(pi t / T) * cos(omega t)` sampled on `dt`.
pub fn intuitive_pulse(amplitude: f64, omega: f64, duration: f64, dt: f64) -> Result<PulseWaveform> {
    PulseWaveform::from_fn(duration, dt, |t| amplitude * (PI * t / duration).sin().powi(2) * (omega * t).cos())
}

/// Energies and dipole operator in an orthonormal eigenbasis. The
/// Hamiltonian during a pulse is `diag(E) - epsilon(t) X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub energies: Array1<f64>,
    pub dipole: Array2<f64>,
}

impl EigenSystem {
    pub fn new(energies: Array1<f64>, dipole: Array2<f64>) -> Result<Self> {
        let n = energies.len();
        if dipole.dim() != (n, n) {
            return Err(Error::DimensionMismatch(format!("{} energies vs dipole {:?}", n, dipole.dim())));
        }
        let scale = dipole.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (dipole[[i, j]] - dipole[[j, i]]).abs() > 1e-10 * scale {
                    return Err(Error::invalid("dipole", "not symmetric"));
                }
            }
        }
        Ok(EigenSystem { energies, dipole })
    }

    /// First `n` states.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.dim() {
            return Err(Error::invalid("n", format!("need 1 <= n <= {}", self.dim())));
        }
        Ok(EigenSystem {
            energies: self.energies.slice(ndarray::s![..n]).to_owned(),
            dipole: self.dipole.slice(ndarray::s![..n, ..n]).to_owned(),
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn hamiltonian(&self, field: f64) -> Array2<f64> {
        Array2::from_diag(&self.energies) - &(&self.dipole * field)
    }

    /// `(diag(E) - shift - field X) psi`.
    fn apply(&self, field: f64, shift: f64, psi: &Array1<c64>) -> Array1<c64> {
        let (re, im) = split(psi);
        let xr = self.dipole.dot(&re);
        let xi = self.dipole.dot(&im);
        Array1::from_shape_fn(self.dim(), |k| {
            let e = self.energies[k] - shift;
            c64::new(e * re[k] - field * xr[k], e * im[k] - field * xi[k])
        })
    }

    /// `exp(-i H tau) psi` for the constant field, by a Taylor series whose
    /// length adapts to `tol`. Negative `tau` evolves backwards.
    pub fn evolve_constant(&self, field: f64, psi: &Array1<c64>, tau: f64, tol: f64) -> Result<Array1<c64>> {
        let (emin, emax) = self.energies.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
        let shift = 0.5 * (emin + emax);
        let xnorm = self.dipole.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let hnorm = 0.5 * (emax - emin) + field.abs() * xnorm;
        let substeps = ((hnorm * tau.abs()) / 1.5).ceil().max(1.0) as usize;
        let h = tau / substeps as f64;
        let mut out = psi.clone();
        for _ in 0..substeps {
            let mut term = out.clone();
            let mut sum = out.clone();
            let mut converged = false;
            for k in 1..=60 {
                term = self.apply(field, shift, &term).mapv(|v| v * (-I * (h / k as f64)));
                sum += &term;
                let tn = term.iter().fold(0.0f64, |m, v| m.max(v.norm()));
                if tn <= tol * 1e-3 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Integration { t: tau, reason: "Taylor series did not converge".into() });
            }
            out = sum;
        }
        let phase = (-I * shift * tau).exp();
        Ok(out.mapv(|v| v * phase))
    }
}

fn split(psi: &Array1<c64>) -> (Array1<f64>, Array1<f64>) {
    (psi.mapv(|v| v.re), psi.mapv(|v| v.im))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisTag {
    Eigen,
    Adiabatic,
}

/// Stored states of one propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Array1<c64>>,
    pub basis: BasisTag,
}

impl Trajectory {
    pub fn final_state(&self) -> &Array1<c64> {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `|c_k(t)|^2`, one row per stored time.
    pub fn populations(&self) -> Array2<f64> {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut out = Array2::zeros((self.len(), n));
        for (i, s) in self.states.iter().enumerate() {
            out.row_mut(i).assign(&s.mapv(|v| v.norm_sqr()));
        }
        out
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.states.iter().map(|s| (norm(s) - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `<psi(t)|A|psi(t)>` for a real symmetric operator in the same basis.
    pub fn expectation(&self, op: &Array2<f64>) -> Result<Vec<f64>> {
        self.states.iter().map(|s| expectation(s, op)).collect()
    }
}

pub fn norm(psi: &Array1<c64>) -> f64 {
    psi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn expectation(psi: &Array1<c64>, op: &Array2<f64>) -> Result<f64> {
    if op.dim() != (psi.len(), psi.len()) {
        return Err(Error::DimensionMismatch(format!("state {} vs operator {:?}", psi.len(), op.dim())));
    }
    let (re, im) = split(psi);
    Ok(re.dot(&op.dot(&re)) + im.dot(&op.dot(&im)))
}

/// `<a|b>`.
pub fn inner(a: &Array1<c64>, b: &Array1<c64>) -> c64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Basis vector `|k>` of dimension `n`.
pub fn basis_state(n: usize, k: usize) -> Array1<c64> {
    let mut v = Array1::zeros(n);
    v[k] = c64::new(1.0, 0.0);
    v
}

#[derive(Debug, Clone)]
pub struct PropagationOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Store every `output_stride`-th pulse interval (or output time).
    pub output_stride: usize,
    pub max_steps: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions { rtol: 1e-9, atol: 1e-12, output_stride: 1, max_steps: 10_000_000 }
    }
}

fn check_initial(initial: &Array1<c64>, dim: usize) -> Result<()> {
    if initial.len() != dim {
        return Err(Error::DimensionMismatch(format!("state {} vs system {}", initial.len(), dim)));
    }
    if (norm(initial) - 1.0).abs() > 1e-8 {
        return Err(Error::invalid("initial", format!("not normalized (norm {})", norm(initial))));
    }
    Ok(())
}

/// Propagates `initial` from `t = 0` to `T` under a piecewise-constant pulse.
pub fn propagate_eigenbasis(
    initial: &Array1<c64>,
    pulse: &PulseWaveform,
    system: &EigenSystem,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    check_initial(initial, system.dim())?;
    let stride = opts.output_stride.max(1);
    let mut times = vec![0.0];
    let mut states = vec![initial.clone()];
    let mut psi = initial.clone();
    for i in 0..pulse.len() {
        let (t0, len) = pulse.interval(i);
        psi = system.evolve_constant(pulse.samples[i], &psi, len, opts.rtol)?;
        if (i + 1) % stride == 0 || i + 1 == pulse.len() {
            times.push(t0 + len);
            states.push(psi.clone());
        }
    }
    Ok(Trajectory { times, states, basis: BasisTag::Eigen })
}

/// Propagates `final_state` given at `t = T` back to `t = 0` under the same
/// pulse; stored times run from `T` down to 0.
pub fn propagate_eigenbasis_backward(
    final_state: &Array1<c64>,
    pulse: &PulseWaveform,
    system: &EigenSystem,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    if final_state.len() != system.dim() {
        return Err(Error::DimensionMismatch(format!("state {} vs system {}", final_state.len(), system.dim())));
    }
    let stride = opts.output_stride.max(1);
    let mut times = vec![pulse.duration];
    let mut states = vec![final_state.clone()];
    let mut psi = final_state.clone();
    for (count, i) in (0..pulse.len()).rev().enumerate() {
        let (t0, len) = pulse.interval(i);
        psi = system.evolve_constant(pulse.samples[i], &psi, -len, opts.rtol)?;
        if (count + 1) % stride == 0 || i == 0 {
            times.push(t0);
            states.push(psi.clone());
        }
    }
    Ok(Trajectory { times, states, basis: BasisTag::Eigen })
}

/// Integrates `y' = f(t, y)` from `t0` to the last entry of `out_times`
/// (which must be monotone in the direction of integration) with the
/// Dormand-Prince 5(4) pair. Returns the states at `out_times`.
pub fn dopri54<F>(
    mut f: F,
    t0: f64,
    y0: &Array1<c64>,
    out_times: &[f64],
    opts: &PropagationOptions,
) -> Result<Vec<Array1<c64>>>
where
    F: FnMut(f64, &Array1<c64>) -> Array1<c64>,
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    // fifth-order weights are A[6]; error = b5 - b4
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];

    let Some(&t_end) = out_times.last() else {
        return Ok(Vec::new());
    };
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.clone();
    let mut out = Vec::with_capacity(out_times.len());
    let mut next_out = 0;
    while next_out < out_times.len() && (out_times[next_out] - t0) * dir <= 0.0 {
        out.push(y.clone());
        next_out += 1;
    }
    let span = (t_end - t0).abs();
    let mut h = (span * 1e-3).max(1e-6).min(span.max(1e-300)) * dir;
    let mut k1 = f(t, &y);
    let mut steps = 0usize;
    let mut err_prev = 1.0f64;
    while next_out < out_times.len() {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Integration { t, reason: "maximum step count exceeded".into() });
        }
        let target = out_times[next_out];
        let mut hit = false;
        if (t + h - target) * dir >= 0.0 {
            h = target - t;
            hit = true;
        }
        let mut k = Vec::with_capacity(7);
        k.push(k1.clone());
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    ys.scaled_add(c64::new(h * A[s][j], 0.0), kj);
                }
            }
            k.push(f(t + C[s] * h, &ys));
        }
        let mut y_new = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            if A[6][j] != 0.0 {
                y_new.scaled_add(c64::new(h * A[6][j], 0.0), kj);
            }
        }
        let mut err = 0.0f64;
        for i in 0..y.len() {
            let mut e = c64::new(0.0, 0.0);
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    e += kj[i] * (h * E[j]);
                }
            }
            let scale = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
            err = err.max(e.norm() / scale);
        }
        if !err.is_finite() {
            return Err(Error::Integration { t, reason: "non-finite derivative".into() });
        }
        if err <= 1.0 {
            t = if hit { target } else { t + h };
            y = y_new;
            k1 = k.pop().expect("seven stages");
            while next_out < out_times.len() && (out_times[next_out] - t) * dir <= 0.0 {
                out.push(y.clone());
                next_out += 1;
            }
            // PI controller
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            err_prev = err.max(1e-4);
            h *= fac.clamp(0.2, 5.0);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if h.abs() < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integration { t, reason: format!("step size underflow (error ratio {err:.3e})") });
        }
    }
    Ok(out)
}

/// Output times from `t0` to `t1` with `n` intervals.
fn output_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (1..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect()
}

/// Eigenbasis propagation under a continuous field from `t0` to `t1`
/// (either direction) with `n_out` stored intervals.
pub fn propagate_field(
    initial: &Array1<c64>,
    field: &dyn ControlField,
    t0: f64,
    t1: f64,
    n_out: usize,
    system: &EigenSystem,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    check_initial(initial, system.dim())?;
    let shift = system.energies.mean().unwrap_or(0.0);
    let grid = output_grid(t0, t1, n_out);
    let states = dopri54(
        |t, y| system.apply(field.value(t), shift, y).mapv(|v| -I * v),
        t0,
        initial,
        &grid,
        opts,
    )?;
    let mut times = vec![t0];
    let mut out = vec![initial.clone()];
    for (t, s) in grid.into_iter().zip(states) {
        let phase = (-I * shift * (t - t0)).exp();
        out.push(s.mapv(|v| v * phase));
        times.push(t);
    }
    Ok(Trajectory { times, states: out, basis: BasisTag::Eigen })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SwitchShape {
    Linear,
    #[default]
    Sin2,
    Tanh,
}

/// Static field ramp `xi(t)` from `xi_start` to `xi_end` over `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchSchedule {
    pub xi_start: f64,
    pub xi_end: f64,
    pub duration: f64,
    pub shape: SwitchShape,
}

const TANH_STEEPNESS: f64 = 3.0;

impl SwitchSchedule {
    /// Ramp progress in `[0, 1]` and its time derivative.
    fn progress(&self, t: f64) -> (f64, f64) {
        let s = (t / self.duration).clamp(0.0, 1.0);
        let inside = t > 0.0 && t < self.duration;
        match self.shape {
            SwitchShape::Linear => (s, if inside { 1.0 / self.duration } else { 0.0 }),
            SwitchShape::Sin2 => {
                let a = 0.5 * PI * s;
                (a.sin().powi(2), if inside { PI / self.duration * a.sin() * a.cos() } else { 0.0 })
            }
            SwitchShape::Tanh => {
                let z = TANH_STEEPNESS * (2.0 * s - 1.0);
                let norm = TANH_STEEPNESS.tanh();
                let p = 0.5 * (1.0 + z.tanh() / norm);
                let dp = 0.5 / norm * (1.0 - z.tanh().powi(2)) * 2.0 * TANH_STEEPNESS / self.duration;
                (p, if inside { dp } else { 0.0 })
            }
        }
    }

    pub fn xi(&self, t: f64) -> f64 {
        self.xi_start + (self.xi_end - self.xi_start) * self.progress(t).0
    }

    pub fn xi_dot(&self, t: f64) -> f64 {
        (self.xi_end - self.xi_start) * self.progress(t).1
    }

    pub fn reversed(&self) -> SwitchSchedule {
        SwitchSchedule { xi_start: self.xi_end, xi_end: self.xi_start, ..*self }
    }
}

/// Propagates adiabatic-basis coefficients through the switch:
/// `c' = -xi'(t) K(xi) c - i eps(xi) c` with `K` and `eps` interpolated
/// linearly between grid points.
pub fn propagate_adiabatic(
    initial: &Array1<c64>,
    switch: &SwitchSchedule,
    table: &AdiabaticTable,
    n_out: usize,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    if !table.gauge_fixed {
        return Err(Error::GaugeNotFixed);
    }
    check_initial(initial, table.n_keep)?;
    if !(switch.duration > 0.0) {
        return Err(Error::invalid("duration", "must be positive"));
    }
    let (min, max) = table.range();
    for xi in [switch.xi_start, switch.xi_end] {
        table.locate(xi).map_err(|_| Error::OutOfTableRange { xi, min, max })?;
    }
    let shift = table.interpolate(switch.xi_start)?.energies[0];
    let grid = output_grid(0.0, switch.duration, n_out);
    let mut failure = None;
    let states = dopri54(
        |t, y| {
            let xi = switch.xi(t);
            let xd = switch.xi_dot(t);
            match table.interpolate(xi) {
                Ok(p) => {
                    let (re, im) = split(y);
                    let kr = p.coupling.dot(&re);
                    let ki = p.coupling.dot(&im);
                    Array1::from_shape_fn(y.len(), |k| {
                        let e = p.energies[k] - shift;
                        c64::new(-xd * kr[k] + e * y[k].im, -xd * ki[k] - e * y[k].re)
                    })
                }
                Err(err) => {
                    failure.get_or_insert(err);
                    Array1::from_elem(y.len(), c64::new(f64::NAN, 0.0))
                }
            }
        },
        0.0,
        initial,
        &grid,
        opts,
    );
    if let Some(err) = failure {
        return Err(err);
    }
    let states = states?;
    let mut times = vec![0.0];
    let mut out = vec![initial.clone()];
    for (t, s) in grid.into_iter().zip(states) {
        let phase = (-I * shift * t).exp();
        out.push(s.mapv(|v| v * phase));
        times.push(t);
    }
    Ok(Trajectory { times, states: out, basis: BasisTag::Adiabatic })
}

/// Expands eigenbasis coefficients into pair-basis coefficients.
pub fn to_pair_basis(coeffs: &Array1<c64>, vectors: &Array2<f64>) -> Result<Array1<c64>> {
    if vectors.ncols() != coeffs.len() {
        return Err(Error::DimensionMismatch(format!("{} coefficients vs {} vectors", coeffs.len(), vectors.ncols())));
    }
    let (re, im) = split(coeffs);
    let r = vectors.dot(&re);
    let i = vectors.dot(&im);
    Ok(Array1::from_shape_fn(r.len(), |k| c64::new(r[k], i[k])))
}

/// One-electron density `rho(x) = int dy1 d^2r2 |Psi|^2` on `xs` (internal
/// length units) for a spatial state given in the pair basis.
pub fn density_x(
    pair_coeffs: &Array1<c64>,
    basis: &TwoElectronBasis,
    conf: &Confinement,
    xs: &[f64],
) -> Result<Vec<f64>> {
    if pair_coeffs.len() != basis.len() {
        return Err(Error::DimensionMismatch(format!("{} coefficients vs basis {}", pair_coeffs.len(), basis.len())));
    }
    let n = basis.orbital_count();
    let sign = basis.sector.exchange_sign();
    // Psi = sum_ab C_ab phi_a(1) phi_b(2)
    let mut c = Array2::<c64>::zeros((n, n));
    for (p, &(i, j)) in basis.pairs.iter().enumerate() {
        let a = pair_coeffs[p] * basis.pair_norm(p);
        c[[i, j]] += a;
        c[[j, i]] += a * sign;
    }
    // gamma_ab = sum_c C_ac^* C_bc
    let gamma = c.mapv(|v| v.conj()).dot(&c.t());
    let l = conf.oscillator_length();
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        let phi = oscillator_functions(basis.nx_max, x / l);
        let mut rho = 0.0;
        for (a, oa) in basis.orbitals.iter().enumerate() {
            for (b, ob) in basis.orbitals.iter().enumerate() {
                if oa.ny == ob.ny {
                    rho += gamma[[a, b]].re * phi[oa.nx] * phi[ob.nx];
                }
            }
        }
        out.push(rho / l);
    }
    Ok(out)
}
