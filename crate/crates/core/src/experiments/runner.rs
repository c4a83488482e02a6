//! Task pipelines behind `qdot run`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::rc::Rc;
use std::time::Instant;

use ndarray::{s, Array1, Array2};
use ndarray_linalg::c64;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::cache::{Artifact, ArrayReader, Cache, Lookup, NamedArray};
use super::config::*;
use super::output::{CacheRecord, Column, RunManifest, StageTiming, Table};
use crate::basis::{build_basis_with_parity, Parity, Sector, TwoElectronBasis};
use crate::control::{krotov_optimize, pulse_spectrum, ControlProblem, OptimizedPulse};
use crate::dynamics::{
    basis_state, density_x, inner, propagate_adiabatic, propagate_eigenbasis, to_pair_basis, EigenSystem,
    PropagationOptions, PulseWaveform, SwitchSchedule, Trajectory,
};
use crate::error::{Error, Result};
use crate::hyperfine::{ensemble_dephasing, sample_nuclear_fields, SpatialCoupling, SpinSpaceModel};
use crate::model::{Confinement, MaterialParams, UnitSystem};
use crate::operators::{assemble_h0, dipole_matrix, parity_signs};
use crate::spectrum::{
    build_adiabatic_table, merge_parity_ladders, solve_eigen, uniform_grid, AdiabaticTable, EigenSolution,
    ReducedOperators, SolveMode, TableOptions,
};

pub struct RunOptions {
    pub cache: Cache,
    /// Overrides `output.directory` of the config.
    pub output_dir: Option<PathBuf>,
}

/// Short content hash of the normalized config.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))[..16].to_string()
}

/// Runs the configured task, writing tables and `manifest.json` into the
/// output directory. On failure the manifest is still written, with the
/// error and whatever outputs were produced.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let task = cfg.task.expect("validated config has a task");
    let out_dir = opts.output_dir.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let mut ctx = Ctx::new(cfg, &opts.cache, out_dir)?;
    let outcome = match task {
        Task::SpectrumSweep => spectrum_sweep(&mut ctx),
        Task::StateTransfer => state_transfer(&mut ctx),
        Task::ClsPreparation => cls_preparation(&mut ctx),
        Task::AnticrossingTransfer => anticrossing_transfer(&mut ctx),
        Task::Dephasing => dephasing(&mut ctx),
    };
    match outcome {
        Ok(()) => {
            ctx.manifest.status = "ok".into();
            ctx.manifest.write(&ctx.out_dir)?;
            Ok(ctx.manifest)
        }
        Err(e) => {
            ctx.manifest.status = "failed".into();
            ctx.manifest.error = Some(e.to_string());
            if let Err(w) = ctx.manifest.write(&ctx.out_dir) {
                log::error!("could not write manifest: {w}");
            }
            Err(e)
        }
    }
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    params: MaterialParams,
    units: UnitSystem,
    conf: Confinement,
    cache: &'a Cache,
    out_dir: PathBuf,
    hash: String,
    manifest: RunManifest,
    reduced: HashMap<(Sector, Parity, usize), Rc<ReducedOperators>>,
    labels: Option<Rc<Vec<(Parity, usize)>>>,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a ScenarioConfig, cache: &'a Cache, out_dir: PathBuf) -> Result<Self> {
        let params = cfg.material.resolve()?;
        let units = params.units()?;
        let conf = params.confinement()?;
        let hash = config_hash(cfg);
        let mut manifest = RunManifest::new(&cfg.name, cfg.task.map_or("", Task::name), &hash);
        manifest.units = Some((&units).into());
        std::fs::create_dir_all(&out_dir)?;
        Ok(Ctx { cfg, params, units, conf, cache, out_dir, hash, manifest, reduced: HashMap::new(), labels: None })
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f(self);
        self.manifest.stages.push(StageTiming { stage: name.to_string(), seconds: t.elapsed().as_secs_f64() });
        r
    }

    fn record_cache(&mut self, artifact: String, status: Lookup) {
        match status {
            Lookup::Hit => self.manifest.cache_hits += 1,
            _ => self.manifest.cache_misses += 1,
        }
        self.manifest.cache.push(CacheRecord { artifact, status });
    }

    fn write_table(&mut self, file: &str, table: &Table) -> Result<()> {
        let path = self.out_dir.join(file);
        std::fs::write(&path, table.render(&self.hash))?;
        self.manifest.outputs.push(path);
        Ok(())
    }

    fn write_pulse(&mut self, file: &str, pulse: &PulseWaveform, title: &str) -> Result<()> {
        let path = self.out_dir.join(file);
        let header = format!("{title}\nconfig_hash {}\ncolumns: t[ps] field[kV/m]", self.hash);
        pulse.write(&path, self.units.time_unit, self.units.efield_unit * 1e-3, &header)?;
        self.manifest.outputs.push(path);
        Ok(())
    }

    fn ps(&self, t: f64) -> f64 {
        self.units.time_to_physical(t)
    }

    fn xi(&self, kv_per_m: f64) -> f64 {
        self.units.efield_to_internal(kv_per_m * 1e3)
    }

    fn kv(&self, xi: f64) -> f64 {
        self.units.efield_to_physical(xi) * 1e-3
    }

    fn mev(&self, e: f64) -> f64 {
        self.units.energy_to_physical(e)
    }

    fn basis(&self, sector: Sector, parity: Parity) -> TwoElectronBasis {
        build_basis_with_parity(self.cfg.basis.n_x_max, self.cfg.basis.n_y_max, sector, Some(parity))
    }

    fn propagation(&self) -> PropagationOptions {
        PropagationOptions { output_stride: self.cfg.output.stride, ..Default::default() }
    }

    /// Lowest `m` field-free eigenstates of one symmetry sector with the
    /// dipole operator in that basis, from the cache when possible.
    fn reduced(&mut self, sector: Sector, parity: Parity, m: usize) -> Result<Rc<ReducedOperators>> {
        if let Some(r) = self.reduced.get(&(sector, parity, m)) {
            return Ok(r.clone());
        }
        let key = json!({
            "artifact": "reduced_operators",
            "material": self.params,
            "n_x_max": self.cfg.basis.n_x_max,
            "n_y_max": self.cfg.basis.n_y_max,
            "sector": sector,
            "y_parity": parity,
            "n_states": m,
        });
        let basis = self.basis(sector, parity);
        if basis.is_empty() {
            return Err(Error::config("basis", format!("{sector:?} sector with {parity:?} y-parity is empty")));
        }
        let conf = self.conf;
        let mut built = None;
        let (red, status) = self.cache.get_or_build(&key, || {
            let t = Instant::now();
            let h0 = assemble_h0(&basis, &conf)?;
            let x = dipole_matrix(&basis, &conf)?;
            log::info!("diagonalizing {} pair states ({sector:?}, {parity:?} y)", basis.len());
            let red = ReducedOperators::new(&h0, &x, m.min(basis.len()))?;
            built = Some(t.elapsed().as_secs_f64());
            Ok(red)
        })?;
        let name = format!("{sector:?}-{parity:?}-{m}").to_lowercase();
        if let Some(secs) = built {
            self.manifest.stages.push(StageTiming { stage: format!("assembly:{name}"), seconds: secs });
        }
        self.record_cache(format!("reduced_operators:{name}"), status);
        let red = Rc::new(red);
        self.reduced.insert((sector, parity, m), red.clone());
        Ok(red)
    }

    fn singlets(&mut self) -> Result<Rc<ReducedOperators>> {
        self.reduced(Sector::Symmetric, Parity::Even, self.cfg.basis.n_reduced)
    }

    fn triplets(&mut self) -> Result<Rc<ReducedOperators>> {
        self.reduced(Sector::Antisymmetric, Parity::Even, self.cfg.basis.n_reduced)
    }

    fn table(&mut self, grid: [f64; 3], n_keep: usize) -> Result<AdiabaticTable> {
        let red = self.singlets()?;
        let key = json!({
            "artifact": "adiabatic_table",
            "material": self.params,
            "n_x_max": self.cfg.basis.n_x_max,
            "n_y_max": self.cfg.basis.n_y_max,
            "n_reduced": self.cfg.basis.n_reduced,
            "grid": grid,
            "n_keep": n_keep,
        });
        let xs = uniform_grid(grid[0], grid[1], grid[2] as usize);
        let mut built = None;
        let (table, status) = self.cache.get_or_build(&key, || {
            let t = Instant::now();
            let tab = build_adiabatic_table(&red.hamiltonian(), &red.dipole, &xs, n_keep, &TableOptions::default())?;
            built = Some(t.elapsed().as_secs_f64());
            Ok(tab)
        })?;
        if let Some(secs) = built {
            self.manifest.stages.push(StageTiming { stage: "adiabatic_table".into(), seconds: secs });
        }
        self.record_cache("adiabatic_table".into(), status);
        Ok(table)
    }

    /// Zero-field singlet labels: all singlets in ascending energy, each
    /// mapped to its y-parity ladder and index within it.
    fn labels(&mut self) -> Result<Rc<Vec<(Parity, usize)>>> {
        if let Some(l) = &self.labels {
            return Ok(l.clone());
        }
        let even = self.singlets()?;
        let odd_size = self.basis(Sector::Symmetric, Parity::Odd).len();
        let (odd, odd_complete) = if odd_size == 0 {
            (Vec::new(), true)
        } else {
            let m = self.cfg.basis.n_keep.min(odd_size);
            (self.reduced(Sector::Symmetric, Parity::Odd, m)?.energies.to_vec(), m == odd_size)
        };
        let even_e = even.energies.to_vec();
        let even_complete = even.energies.len() == self.basis(Sector::Symmetric, Parity::Even).len();
        let mut limit = f64::INFINITY;
        if !even_complete {
            limit = limit.min(*even_e.last().expect("non-empty"));
        }
        if !odd_complete {
            limit = limit.min(*odd.last().expect("non-empty"));
        }
        let merged: Vec<(Parity, usize)> = merge_parity_ladders(&even_e, &odd)
            .into_iter()
            .take_while(|&(p, i)| {
                let e = if p == Parity::Even { even_e[i] } else { odd[i] };
                e <= limit
            })
            .collect();
        let merged = Rc::new(merged);
        self.labels = Some(merged.clone());
        Ok(merged)
    }

    /// Index in the even-y ladder of a zero-field singlet label.
    fn even_index(&mut self, label: usize, path: &str) -> Result<usize> {
        let labels = self.labels()?;
        match labels.get(label) {
            None => Err(Error::config(path, format!("state {label} lies beyond the computed spectrum ({} labels)", labels.len()))),
            Some((Parity::Odd, _)) => Err(Error::config(
                path,
                format!("state {label} has odd y-parity and is not reachable with an x-polarized field"),
            )),
            Some(&(Parity::Even, i)) => Ok(i),
        }
    }

    fn label_of(&mut self, even: usize) -> String {
        match self.labels() {
            Ok(l) => l
                .iter()
                .position(|&(p, i)| p == Parity::Even && i == even)
                .map_or_else(|| format!("e{even}"), |k| k.to_string()),
            Err(_) => format!("e{even}"),
        }
    }

    fn eigen_system(&mut self, n_keep: usize) -> Result<EigenSystem> {
        let red = self.singlets()?;
        let n = n_keep.min(red.len());
        EigenSystem::new(red.energies.slice(s![..n]).to_owned(), red.dipole.slice(s![..n, ..n]).to_owned())
    }

    fn population_table(&mut self, title: &str, traj: &Trajectory, extra: &[(&str, Array1<c64>)]) -> Table {
        let n = self.cfg.output.n_populations.min(traj.states[0].len());
        let mut cols = vec![Column::new("t", "ps")];
        for k in 0..n {
            cols.push(Column::new(format!("P{}", self.label_of(k)), ""));
        }
        for (name, _) in extra {
            cols.push(Column::new(*name, ""));
        }
        cols.push(Column::new("P_rest", ""));
        let mut table = Table::new(title, cols).note("P<label>: population of zero-field singlet <label>");
        for (t, psi) in traj.times.iter().zip(&traj.states) {
            let mut row = vec![self.ps(*t)];
            let pops: Vec<f64> = psi.iter().map(|v| v.norm_sqr()).collect();
            row.extend_from_slice(&pops[..n]);
            for (_, target) in extra {
                row.push(inner(target, psi).norm_sqr());
            }
            row.push((1.0 - pops[..n].iter().sum::<f64>()).max(0.0));
            table.push(row);
        }
        table
    }
}

impl Artifact for ReducedOperators {
    const KIND: &'static str = "reduced";

    fn encode(&self) -> Vec<NamedArray> {
        vec![
            NamedArray::from_array1("energies", &self.energies),
            NamedArray::from_array2("dipole", &self.dipole),
            NamedArray::from_array2("vectors", &self.vectors),
        ]
    }

    fn decode(arrays: Vec<NamedArray>) -> Result<Self> {
        let mut r = ArrayReader::new(arrays);
        let energies = r.next("energies")?.into_array1()?;
        let dipole = r.next("dipole")?.into_array2()?;
        let vectors = r.next("vectors")?.into_array2()?;
        let n = energies.len();
        if dipole.dim() != (n, n) || vectors.ncols() != n {
            return Err(Error::Cache("inconsistent reduced operator shapes".into()));
        }
        Ok(ReducedOperators { energies, dipole, vectors })
    }
}

impl Artifact for AdiabaticTable {
    const KIND: &'static str = "table";

    fn encode(&self) -> Vec<NamedArray> {
        let meta = Array1::from(vec![self.n_keep as f64, f64::from(u8::from(self.gauge_fixed)), self.max_overlap_defect]);
        let mut out = vec![
            NamedArray::from_array1("xi_grid", &Array1::from(self.xi_grid.clone())),
            NamedArray::from_array1("meta", &meta),
        ];
        for (m, sol) in self.solutions.iter().enumerate() {
            out.push(NamedArray::from_array1(&format!("energies{m}"), &sol.energies));
            out.push(NamedArray::from_array2(&format!("vectors{m}"), &sol.vectors));
            out.push(NamedArray::from_array2(&format!("dipole{m}"), &self.dipole[m]));
            out.push(NamedArray::from_array2(&format!("coupling{m}"), &self.coupling[m]));
        }
        out
    }

    fn decode(arrays: Vec<NamedArray>) -> Result<Self> {
        let mut r = ArrayReader::new(arrays);
        let xi_grid = r.next("xi_grid")?.data;
        let meta = r.next("meta")?.data;
        if meta.len() != 3 {
            return Err(Error::Cache("bad table metadata".into()));
        }
        let n_keep = meta[0] as usize;
        let (mut solutions, mut dipole, mut coupling) = (Vec::new(), Vec::new(), Vec::new());
        for (m, &xi) in xi_grid.iter().enumerate() {
            let energies = r.next(&format!("energies{m}"))?.into_array1()?;
            let vectors = r.next(&format!("vectors{m}"))?.into_array2()?;
            if energies.len() != n_keep || vectors.ncols() != n_keep {
                return Err(Error::Cache("table point has wrong size".into()));
            }
            solutions.push(EigenSolution { energies, vectors, xi });
            dipole.push(r.next(&format!("dipole{m}"))?.into_array2()?);
            coupling.push(r.next(&format!("coupling{m}"))?.into_array2()?);
        }
        Ok(AdiabaticTable {
            xi_grid,
            solutions,
            dipole,
            coupling,
            n_keep,
            gauge_fixed: meta[1] != 0.0,
            max_overlap_defect: meta[2],
        })
    }
}

/// Lowest `n` eigenpairs of `diag(E) - xi X` in a reduced basis, with the
/// eigenvectors expressed in the pair basis.
fn states_at(red: &ReducedOperators, xi: f64, n: usize) -> Result<(Array1<f64>, Array2<f64>, Array2<f64>)> {
    let h = red.hamiltonian() - &(&red.dipole * xi);
    let sol = solve_eigen(&h, n.min(red.len()), SolveMode::Dense)?;
    let pair = red.vectors.dot(&sol.vectors);
    Ok((sol.energies, sol.vectors, pair))
}

fn spectrum_sweep(ctx: &mut Ctx) -> Result<()> {
    let spec = ctx.cfg.sweep.clone().expect("validated");
    let fields = uniform_grid(spec.field_min_kv_per_m, spec.field_max_kv_per_m, spec.n_points);
    let mut sectors = vec![(Sector::Symmetric, "singlet")];
    if spec.triplets {
        sectors.push((Sector::Antisymmetric, "triplet"));
    }
    let shift = ctx.mev(ctx.conf.omega * ctx.conf.d * ctx.conf.d / 4.0);
    for (sector, name) in sectors {
        let red = ctx.reduced(sector, Parity::Even, ctx.cfg.basis.n_reduced)?;
        let n = spec.n_states.min(red.len());
        let rows = ctx.stage(&format!("sweep:{name}"), |ctx| {
            fields
                .iter()
                .map(|&f| {
                    let xi = ctx.xi(f);
                    let h = red.hamiltonian() - &(&red.dipole * xi);
                    let e = solve_eigen(&h, n, SolveMode::Dense)?.energies;
                    let mut row = vec![f];
                    row.extend(e.iter().map(|&v| ctx.mev(v)));
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut cols = vec![Column::new("field", "kV/m")];
        cols.extend((0..n).map(|k| Column::new(format!("E{k}"), "meV")));
        let mut table = Table::new(format!("{name} energies versus static field (even y-parity)"), cols)
            .note(format!("energies include the constant confinement offset {shift:.6} meV"))
            .note("H(F) = H0 - F X; positive F lowers states localized at x > 0");
        for r in rows {
            table.push(r);
        }
        ctx.write_table(&format!("spectrum_{name}.tsv"), &table)?;
    }

    // Zero-field level list with parities.
    let red = ctx.singlets()?;
    let labels = ctx.labels()?;
    let even_basis = ctx.basis(Sector::Symmetric, Parity::Even);
    let (px, _) = parity_signs(&even_basis);
    let odd_e = if ctx.basis(Sector::Symmetric, Parity::Odd).is_empty() {
        Vec::new()
    } else {
        let m = ctx.cfg.basis.n_keep.min(ctx.basis(Sector::Symmetric, Parity::Odd).len());
        ctx.reduced(Sector::Symmetric, Parity::Odd, m)?.energies.to_vec()
    };
    let e0 = red.energies[0];
    let mut table = Table::new(
        "zero-field singlet levels",
        vec![
            Column::new("label", ""),
            Column::new("excitation", "meV"),
            Column::new("y_parity", ""),
            Column::new("x_parity", ""),
        ],
    )
    .note("x_parity is 0 for odd-y states (not resolved)");
    for (label, &(p, i)) in labels.iter().enumerate().take(spec.n_states.max(12)) {
        let (e, xp) = match p {
            Parity::Even => {
                let v = red.vectors.column(i);
                let s: f64 = v.iter().zip(&px).map(|(c, s)| c * c * s).sum();
                (red.energies[i], s.signum())
            }
            Parity::Odd => (odd_e[i], 0.0),
        };
        table.push(vec![label as f64, ctx.mev(e - e0), f64::from(p.sign()), xp]);
    }
    ctx.write_table("levels.tsv", &table)?;
    ctx.manifest.result("ground_energy_meV", ctx.mev(e0));
    Ok(())
}

/// Numerical integral of the envelope over one segment.
fn envelope_area(env: impl Fn(f64) -> f64, duration: f64) -> f64 {
    let n = 4000;
    let h = duration / n as f64;
    (0..n).map(|k| env((k as f64 + 0.5) * h)).sum::<f64>() * h
}

fn envelope_fn(seg: &SegmentSpec, omega: f64, duration: f64) -> impl Fn(f64) -> f64 {
    let kind = seg.envelope;
    let ramp = (seg.ramp_cycles * 2.0 * PI / omega).min(duration / 2.0);
    move |t: f64| match kind {
        Envelope::Sin2 => (PI * t / duration).sin().powi(2),
        Envelope::Ramp => {
            if t < ramp {
                (0.5 * PI * t / ramp).sin().powi(2)
            } else if t > duration - ramp {
                (0.5 * PI * (duration - t) / ramp).sin().powi(2)
            } else {
                1.0
            }
        }
    }
}

struct Segment {
    start: f64,
    duration: f64,
    omega: f64,
    amplitude: f64,
    spec: SegmentSpec,
}

fn build_segments(ctx: &mut Ctx, spec: &IntuitiveSpec, sys: &EigenSystem, base: &str) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    let mut start = 0.0;
    for (j, seg) in spec.segments.iter().enumerate() {
        let path = format!("{base}.segments[{j}].transition");
        let a = ctx.even_index(seg.transition[0], &path)?;
        let b = ctx.even_index(seg.transition[1], &path)?;
        if a >= sys.dim() || b >= sys.dim() {
            return Err(Error::config(path, "state outside basis.n_keep"));
        }
        let omega = (sys.energies[b] - sys.energies[a]).abs();
        let duration = ctx.units.time_to_internal(seg.duration_ps);
        let amplitude = match (seg.area, seg.amplitude_kv_per_m) {
            (_, Some(kv)) => ctx.xi(kv),
            (Some(area), None) => {
                let x = sys.dipole[[a, b]].abs();
                if x < 1e-12 {
                    return Err(Error::config(path, "transition is dipole forbidden"));
                }
                area * PI / (x * envelope_area(envelope_fn(seg, omega, duration), duration))
            }
            (None, None) => unreachable!("validated"),
        };
        out.push(Segment { start, duration, omega, amplitude, spec: seg.clone() });
        start += duration;
    }
    Ok(out)
}

fn segments_waveform(segments: &[Segment], dt: f64, scale: f64) -> Result<PulseWaveform> {
    let total: f64 = segments.iter().map(|s| s.duration).sum();
    let envs: Vec<_> = segments.iter().map(|s| envelope_fn(&s.spec, s.omega, s.duration)).collect();
    PulseWaveform::from_fn(total, dt, |t| {
        for (s, env) in segments.iter().zip(&envs) {
            if t >= s.start && t < s.start + s.duration {
                let tl = t - s.start;
                return scale * s.amplitude * env(tl) * (s.omega * tl).cos();
            }
        }
        0.0
    })
}

fn final_overlap(sys: &EigenSystem, pulse: &PulseWaveform, initial: &Array1<c64>, target: &Array1<c64>) -> Result<f64> {
    let opts = PropagationOptions { output_stride: usize::MAX, ..Default::default() };
    let traj = propagate_eigenbasis(initial, pulse, sys, &opts)?;
    Ok(inner(target, traj.final_state()).norm_sqr())
}

fn write_optimization(ctx: &mut Ctx, label: &str, out: &OptimizedPulse) -> Result<()> {
    let mut conv = Table::new(
        format!("Krotov convergence ({label})"),
        vec![Column::new("iteration", ""), Column::new("yield", ""), Column::new("fluence", "internal")],
    )
    .note("iteration 0 is the initial guess; fluence = sum of epsilon^2 dt in internal units");
    for (i, (y, f)) in out.yield_history.iter().zip(&out.fluence_history).enumerate() {
        conv.push(vec![i as f64, *y, *f]);
    }
    ctx.write_table(&format!("convergence_{label}.tsv"), &conv)?;
    let (w, amp) = pulse_spectrum(&out.pulse);
    let mut spec = Table::new(
        format!("pulse spectrum ({label})"),
        vec![Column::new("omega", "rad/ps"), Column::new("amplitude", "kV/m ps")],
    );
    let (tu, fu) = (ctx.units.time_unit, ctx.units.efield_unit * 1e-3);
    for (w, a) in w.iter().zip(&amp) {
        spec.push(vec![w / tu, a * fu * tu]);
    }
    ctx.write_table(&format!("pulse_spectrum_{label}.tsv"), &spec)?;
    ctx.manifest.result(format!("{label}.best_iteration"), out.best_iteration as f64);
    ctx.manifest.result(format!("{label}.iterations"), out.iterations_used as f64);
    if let Some(r) = out.good_rank {
        ctx.manifest.result(format!("{label}.good_subspace_rank"), r as f64);
    }
    if let Some(y) = out.unfiltered_yield {
        ctx.manifest.result(format!("{label}.unfiltered_yield"), y);
    }
    Ok(())
}

fn optimize(
    ctx: &mut Ctx,
    spec: &OptimizeSpec,
    sys: &EigenSystem,
    initial: &Array1<c64>,
    target: &Array1<c64>,
    resonance: f64,
    dt: f64,
) -> Result<OptimizedPulse> {
    let duration = ctx.units.time_to_internal(spec.duration_ps);
    let omega = spec.guess.omega.unwrap_or(resonance);
    let amp = spec.guess.amplitude;
    let guess = match spec.guess.shape {
        GuessShape::Sin2Cos => PulseWaveform::from_fn(duration, dt, |t| amp * (PI * t / duration).sin().powi(2) * (omega * t).cos())?,
        GuessShape::Constant => PulseWaveform::from_fn(duration, dt, |_| amp)?,
    };
    let problem = ControlProblem {
        initial_state: initial.clone(),
        target_state: target.clone(),
        duration,
        dt,
        penalty: spec.penalty.clone(),
        initial_guess: guess,
        max_iterations: spec.max_iterations,
        target_yield: spec.target_yield,
    };
    let opts = PropagationOptions::default();
    ctx.stage(&format!("optimize:{}", spec.label), |_| krotov_optimize(&problem, sys, &opts))
}

/// Runs every pulse of `transfer` from `initial` towards `target`.
fn run_pulses(
    ctx: &mut Ctx,
    transfer: &TransferSpec,
    sys: &EigenSystem,
    initial: &Array1<c64>,
    target: &Array1<c64>,
    resonance: f64,
    ionic: Option<(usize, usize)>,
) -> Result<()> {
    for (i, pulse_spec) in transfer.pulses.iter().enumerate() {
        let base = format!("transfer.pulses[{i}]");
        let label = pulse_spec.label().to_string();
        let (pulse, yield_) = match pulse_spec {
            PulseSpec::Intuitive(spec) => {
                let segments = build_segments(ctx, spec, sys, &base)?;
                let factors = if spec.amplitude_scan.is_empty() { vec![1.0] } else { spec.amplitude_scan.clone() };
                let mut scan = Table::new(
                    format!("amplitude scan ({label})"),
                    vec![Column::new("factor", ""), Column::new("yield", "")],
                );
                let mut best: Option<(f64, f64)> = None;
                for &f in &factors {
                    let p = segments_waveform(&segments, transfer.dt, f)?;
                    let y = ctx.stage(&format!("propagate:{label}"), |_| final_overlap(sys, &p, initial, target))?;
                    scan.push(vec![f, y]);
                    if best.is_none_or(|(_, by)| y > by) {
                        best = Some((f, y));
                    }
                }
                if factors.len() > 1 {
                    ctx.write_table(&format!("scan_{label}.tsv"), &scan)?;
                }
                let (factor, y) = best.expect("at least one factor");
                for (j, s) in segments.iter().enumerate() {
                    ctx.manifest.result(format!("{label}.segment{j}.carrier_rad_per_ps"), s.omega / ctx.units.time_unit);
                    ctx.manifest.result(format!("{label}.segment{j}.amplitude_kv_per_m"), ctx.kv(s.amplitude * factor));
                }
                ctx.manifest.result(format!("{label}.amplitude_factor"), factor);
                (segments_waveform(&segments, transfer.dt, factor)?, y)
            }
            PulseSpec::Optimize(spec) => {
                let out = optimize(ctx, spec, sys, initial, target, resonance, transfer.dt)?;
                write_optimization(ctx, &label, &out)?;
                (out.pulse.clone(), out.final_yield)
            }
        };
        let opts = ctx.propagation();
        let traj = ctx.stage(&format!("propagate:{label}"), |_| propagate_eigenbasis(initial, &pulse, sys, &opts))?;
        let table = ctx.population_table(&format!("populations during pulse `{label}`"), &traj, &[("P_target", target.clone())]);
        ctx.write_table(&format!("populations_{label}.tsv"), &table)?;
        ctx.write_pulse(&format!("pulse_{label}.tsv"), &pulse, &format!("pulse `{label}`"))?;
        let final_yield = inner(target, traj.final_state()).norm_sqr();
        if (final_yield - yield_).abs() > 1e-6 {
            log::warn!("pulse `{label}`: replayed yield {final_yield} differs from {yield_}");
        }
        ctx.manifest.result(format!("{label}.yield"), final_yield);
        if let Some((a, b)) = ionic {
            let psi = traj.final_state();
            ctx.manifest.result(format!("{label}.ionic_population"), psi[a].norm_sqr() + psi[b].norm_sqr());
        }
        ctx.manifest.result(format!("{label}.duration_ps"), ctx.ps(pulse.duration));
        ctx.manifest.result(format!("{label}.peak_field_kv_per_m"), ctx.kv(pulse.max_abs()));
        ctx.manifest.result(format!("{label}.max_norm_drift"), traj.max_norm_drift());
    }
    Ok(())
}

fn state_transfer(ctx: &mut Ctx) -> Result<()> {
    let transfer = ctx.cfg.transfer.clone().expect("validated");
    let n_keep = ctx.cfg.basis.n_keep;
    let sys = ctx.stage("spectrum", |ctx| ctx.eigen_system(n_keep))?;
    let a = ctx.even_index(transfer.initial, "transfer.initial")?;
    let b = ctx.even_index(transfer.target.expect("validated"), "transfer.target")?;
    if a >= sys.dim() || b >= sys.dim() {
        return Err(Error::config("transfer", "initial or target state outside basis.n_keep"));
    }
    let omega = (sys.energies[b] - sys.energies[a]).abs();
    ctx.manifest.result("resonance_rad_per_ps", omega / ctx.units.time_unit);
    ctx.manifest.result("transition_dipole", sys.dipole[[a, b]]);
    let (psi0, target) = (basis_state(sys.dim(), a), basis_state(sys.dim(), b));
    run_pulses(ctx, &transfer, &sys, &psi0, &target, omega, None)
}

/// Equal superposition of the two ionic states localized in the left dot.
fn cls_state(sys: &EigenSystem, a: usize, b: usize) -> (Array1<c64>, f64) {
    let x = sys.dipole[[a, b]];
    // <X> = s X_ab for (|a> + s|b>)/sqrt 2; the left dot has X < 0.
    let s = if x > 0.0 { -1.0 } else { 1.0 };
    let mut v = Array1::zeros(sys.dim());
    v[a] = c64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    v[b] = c64::new(s * std::f64::consts::FRAC_1_SQRT_2, 0.0);
    (v, if s > 0.0 { 0.0 } else { PI })
}

/// Mean spacing of successive upward zero crossings of `y - mean(y)`.
fn oscillation_period(t: &[f64], y: &[f64]) -> Option<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut ups = Vec::new();
    let mut downs = Vec::new();
    for k in 1..y.len() {
        let (y0, y1) = (y[k - 1] - mean, y[k] - mean);
        if y0 == y1 {
            continue;
        }
        let tc = t[k - 1] + (t[k] - t[k - 1]) * y0 / (y0 - y1);
        if y0 < 0.0 && y1 >= 0.0 {
            ups.push(tc);
        } else if y0 > 0.0 && y1 <= 0.0 {
            downs.push(tc);
        }
    }
    let span = |c: &[f64]| (c.len() >= 2).then(|| (c[c.len() - 1] - c[0]) / (c.len() - 1) as f64);
    match (span(&ups), span(&downs)) {
        (Some(a), Some(b)) => Some(0.5 * (a + b)),
        (Some(a), None) | (None, Some(a)) => Some(a),
        (None, None) => {
            let mut all: Vec<f64> = ups.into_iter().chain(downs).collect();
            all.sort_by(f64::total_cmp);
            (all.len() == 2).then(|| 2.0 * (all[1] - all[0]))
        }
    }
}

fn cls_preparation(ctx: &mut Ctx) -> Result<()> {
    let cls = ctx.cfg.cls.clone().expect("validated");
    let n_keep = ctx.cfg.basis.n_keep;
    let sys = ctx.stage("spectrum", |ctx| ctx.eigen_system(n_keep))?;
    let a = ctx.even_index(cls.ionic[0], "cls.ionic")?;
    let b = ctx.even_index(cls.ionic[1], "cls.ionic")?;
    if a >= sys.dim() || b >= sys.dim() {
        return Err(Error::config("cls.ionic", "ionic states outside basis.n_keep"));
    }
    let (target, phase) = cls_state(&sys, a, b);
    let splitting = (sys.energies[b] - sys.energies[a]).abs();
    ctx.manifest.result("cls.phase_rad", phase);
    ctx.manifest.result("cls.ionic_dipole", sys.dipole[[a, b]]);
    ctx.manifest.result("cls.period_from_splitting_ps", ctx.ps(2.0 * PI / splitting));

    let red = ctx.singlets()?;
    let basis = ctx.basis(Sector::Symmetric, Parity::Even);
    let vectors = red.vectors.slice(s![.., ..sys.dim()]).to_owned();
    let half = cls.density_extent_nm;
    let xs_nm = uniform_grid(-half, half, cls.density_points);
    let xs: Vec<f64> = xs_nm.iter().map(|&x| ctx.units.length_to_internal(x)).collect();
    let conf = ctx.conf;
    let density = |psi: &Array1<c64>| -> Result<Vec<f64>> {
        let pair = to_pair_basis(psi, &vectors)?;
        density_x(&pair, &basis, &conf, &xs)
    };
    let rho0 = density(&target)?;
    let left: f64 = xs_nm.iter().zip(&rho0).filter(|(x, _)| **x < 0.0).map(|(_, r)| r).sum();
    let total: f64 = rho0.iter().sum();
    ctx.manifest.result("cls.left_fraction", left / total);

    if let Some(free_ps) = cls.free_evolution_ps {
        let dt = ctx.cfg.transfer.as_ref().map_or(0.5, |t| t.dt) * ctx.cfg.output.stride as f64;
        let t_end = ctx.units.time_to_internal(free_ps);
        let n = (t_end / dt).ceil() as usize;
        let e0 = sys.energies[0];
        let evolve = |t: f64| target.iter().enumerate().map(|(k, c)| c * c64::new(0.0, -(sys.energies[k] - e0) * t).exp()).collect::<Array1<c64>>();
        let xop = sys.dipole.mapv(|v| c64::new(v, 0.0));
        let la = ctx.label_of(a);
        let lb = ctx.label_of(b);
        let mut table = Table::new(
            "field-free evolution of the charge-localized state",
            vec![Column::new("t", "ps"), Column::new("X", "nm"), Column::new(format!("P{la}"), ""), Column::new(format!("P{lb}"), "")],
        )
        .note("X = <x1 + x2>; negative values mean charge in the left dot");
        let (mut ts, mut xv) = (Vec::new(), Vec::new());
        for k in 0..=n {
            let t = (k as f64 * dt).min(t_end);
            let psi = evolve(t);
            let x = inner(&psi, &xop.dot(&psi)).re * ctx.units.length_unit;
            table.push(vec![ctx.ps(t), x, psi[a].norm_sqr(), psi[b].norm_sqr()]);
            ts.push(ctx.ps(t));
            xv.push(x);
        }
        ctx.write_table("cls_free_evolution.tsv", &table)?;
        if let Some(p) = oscillation_period(&ts, &xv) {
            ctx.manifest.result("cls.period_ps", p);
        }
        ctx.manifest.result("cls.x_initial_nm", xv[0]);
        if !cls.density_times_ps.is_empty() {
            let mut cols = vec![Column::new("x", "nm")];
            cols.extend(cls.density_times_ps.iter().map(|t| Column::new(format!("rho(t={t}ps)"), "1/nm")));
            let mut dens = Table::new("one-electron density integrated over y", cols).note("normalized to two electrons");
            let profiles: Vec<Vec<f64>> = cls
                .density_times_ps
                .iter()
                .map(|&t| density(&evolve(ctx.units.time_to_internal(t))))
                .collect::<Result<_>>()?;
            for (i, x) in xs_nm.iter().enumerate() {
                let mut row = vec![*x];
                row.extend(profiles.iter().map(|p| p[i] / ctx.units.length_unit));
                dens.push(row);
            }
            ctx.write_table("cls_density.tsv", &dens)?;
        }
    }

    if let Some(transfer) = ctx.cfg.transfer.clone() {
        if !transfer.pulses.is_empty() {
            let i = ctx.even_index(transfer.initial, "transfer.initial")?;
            let psi0 = basis_state(sys.dim(), i);
            let resonance = (sys.energies[b] - sys.energies[i]).abs();
            run_pulses(ctx, &transfer, &sys, &psi0, &target, resonance, Some((a, b)))?;
        }
    }
    Ok(())
}

/// Golden-section search for the smallest gap between levels `k < l` of
/// `diag(E) - xi X` on `[lo, hi]`.
fn refine_gap_minimum(red: &ReducedOperators, k: usize, l: usize, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
    let gap = |xi: f64| -> Result<f64> {
        let h = red.hamiltonian() - &(&red.dipole * xi);
        let e = solve_eigen(&h, l + 1, SolveMode::Dense)?.energies;
        Ok(e[l] - e[k])
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fa, mut fb) = (gap(a)?, gap(b)?);
    for _ in 0..60 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = gap(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = gap(b)?;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok((x, gap(x)?))
}

/// Ground-state return probability after the reversed protocol. For a real
/// Hamiltonian the protocol run backwards (reversed switch, time-reversed
/// pulse) is the transpose of the forward one, so the return amplitude is
/// `sum_k f_k s_k` with `f` the forward image of the initial state.
fn return_probability(forward: &Array1<c64>, singlet: &Array1<c64>) -> f64 {
    forward.iter().zip(singlet).map(|(f, s)| f * s).sum::<c64>().norm_sqr()
}

fn anticrossing_transfer(ctx: &mut Ctx) -> Result<()> {
    let ac = ctx.cfg.anticrossing.clone().expect("validated");
    let sw = ctx.cfg.switch.clone().expect("validated");
    let hf = ctx.cfg.hyperfine.clone().expect("validated");
    let red = ctx.singlets()?;
    let (k, l) = (ac.pair[0], ac.pair[1]);

    // Locate the anticrossing.
    let (lo, hi) = (ctx.xi(ac.search_kv_per_m[0]), ctx.xi(ac.search_kv_per_m[1]));
    let (xi_c, gap) = ctx.stage("locate_anticrossing", |_| {
        let xs = uniform_grid(lo, hi, ac.search_points);
        let gaps = xs
            .iter()
            .map(|&xi| {
                let h = red.hamiltonian() - &(&red.dipole * xi);
                let e = solve_eigen(&h, l + 1, SolveMode::Dense)?.energies;
                Ok(e[l] - e[k])
            })
            .collect::<Result<Vec<f64>>>()?;
        let m = (0..gaps.len()).min_by(|&i, &j| gaps[i].total_cmp(&gaps[j])).expect("points");
        if m == 0 || m + 1 == gaps.len() {
            return Err(Error::config("anticrossing.search_kv_per_m", "no gap minimum inside the search window"));
        }
        refine_gap_minimum(&red, k, l, xs[m - 1], xs[m + 1])
    })?;
    ctx.manifest.result("anticrossing.field_kv_per_m", ctx.kv(xi_c));
    ctx.manifest.result("anticrossing.gap_meV", ctx.mev(gap));

    // Adiabatic table between the anticrossing and the hold field.
    let xi_end = ctx.xi(sw.field_end_kv_per_m);
    let grid = if xi_end < xi_c { [xi_end, xi_c, ac.table_points as f64] } else { [xi_c, xi_end, ac.table_points as f64] };
    let table = ctx.stage("table", |ctx| ctx.table(grid, ac.n_keep))?;
    ctx.manifest.result("table.max_overlap_defect", table.max_overlap_defect);
    let at = |xi: f64| if (table.xi_grid[0] - xi).abs() < (table.xi_grid[table.xi_grid.len() - 1] - xi).abs() { 0 } else { table.xi_grid.len() - 1 };
    let (ic, ie) = (at(xi_c), at(xi_end));

    // Optimized pulse at the anticrossing, in its eigenbasis.
    let sys = EigenSystem::new(table.solutions[ic].energies.clone(), table.dipole[ic].clone())?;
    let (psi0, target) = (basis_state(ac.n_keep, k), basis_state(ac.n_keep, l));
    let resonance = sys.energies[l] - sys.energies[k];
    let out = optimize(ctx, &ac.pulse, &sys, &psi0, &target, resonance, ac.dt)?;
    write_optimization(ctx, &ac.pulse.label, &out)?;
    let opts = ctx.propagation();
    let traj = ctx.stage("propagate:pulse", |_| propagate_eigenbasis(&psi0, &out.pulse, &sys, &opts))?;
    let after_pulse = traj.final_state().clone();
    let yield_ = after_pulse[l].norm_sqr();
    ctx.manifest.result("pulse.yield", yield_);
    ctx.manifest.result("pulse.duration_ps", ctx.ps(out.pulse.duration));
    let mut pops = Table::new(
        "adiabatic-state populations during the pulse at the anticrossing",
        std::iter::once(Column::new("t", "ps")).chain((0..ac.n_keep.min(ctx.cfg.output.n_populations)).map(|j| Column::new(format!("P{j}"), ""))).collect(),
    )
    .note("P<j>: population of the j-th adiabatic state at the anticrossing field");
    let np = ac.n_keep.min(ctx.cfg.output.n_populations);
    for (t, psi) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![ctx.ps(*t)];
        row.extend(psi.iter().take(np).map(|v| v.norm_sqr()));
        pops.push(row);
    }
    ctx.write_table("pulse_populations.tsv", &pops)?;
    ctx.write_pulse("pulse_anticrossing.tsv", &out.pulse, "optimized pulse at the anticrossing")?;

    // Adiabatic switch to the hold field.
    let schedule = SwitchSchedule { xi_start: xi_c, xi_end, duration: ctx.units.time_to_internal(sw.duration_ps), shape: sw.shape };
    let n_out = 400;
    let popt = PropagationOptions::default();
    let switched = ctx.stage("propagate:switch", |_| propagate_adiabatic(&after_pulse, &schedule, &table, n_out, &popt))?;
    let reference = ctx.stage("propagate:switch", |_| propagate_adiabatic(&psi0, &schedule, &table, n_out, &popt))?;
    let mut st = Table::new(
        "adiabatic-state populations during the switch",
        std::iter::once(Column::new("t", "ps"))
            .chain(std::iter::once(Column::new("field", "kV/m")))
            .chain((0..np).map(|j| Column::new(format!("P{j}"), "")))
            .collect(),
    );
    for (t, psi) in switched.times.iter().zip(&switched.states) {
        let mut row = vec![ctx.ps(*t), ctx.kv(schedule.xi(*t))];
        row.extend(psi.iter().take(np).map(|v| v.norm_sqr()));
        st.push(row);
    }
    ctx.write_table("switch_populations.tsv", &st)?;
    let psi_f = switched.final_state().clone();
    let ref_f = reference.final_state().clone();
    ctx.manifest.result("switch.target_population", psi_f[l].norm_sqr());
    ctx.manifest.result("switch.max_norm_drift", switched.max_norm_drift());

    // Direct check of the reversal identity without a hold.
    let back = ctx.stage("propagate:reverse", |_| {
        let b = propagate_adiabatic(&psi_f, &schedule.reversed(), &table, 1, &popt)?;
        propagate_eigenbasis(b.final_state(), &out.pulse.time_reversed(), &sys, &popt)
    })?;
    ctx.manifest.result("return_no_hold.explicit", back.final_state()[k].norm_sqr());
    ctx.manifest.result("return_no_hold.transpose", return_probability(&psi_f, &psi_f));

    // Hold with frozen nuclear fields.
    let model = ctx.stage("hyperfine_model", |ctx| {
        let tred = ctx.triplets()?;
        let sb = ctx.basis(Sector::Symmetric, Parity::Even);
        let tb = ctx.basis(Sector::Antisymmetric, Parity::Even);
        let svec = red.vectors.dot(&table.solutions[ie].vectors);
        let (te, _, tvec) = states_at(&tred, xi_end, hf.n_triplet)?;
        let spatial = SpatialCoupling::new(&sb, &tb, &svec, &tvec)?;
        SpinSpaceModel::new(table.solutions[ie].energies.clone(), te, spatial, ctx.params.gamma_e() / ctx.units.bfield_unit)
    })?;
    ctx.manifest.result("hold.singlet_triplet_splitting_ueV", 1e3 * ctx.mev(model.singlet_energies[l] - model.triplet_energies[l]));
    ctx.manifest.result("hold.ground_singlet_triplet_splitting_ueV", 1e3 * ctx.mev(model.singlet_energies[k] - model.triplet_energies[k]));
    let fields = sample_nuclear_fields(hf.b_nuc_mt * 1e-3, hf.n_samples, hf.seed)?;
    let hold = ctx.units.time_to_internal(hf.hold_ps);
    let times = uniform_grid(0.0, hold, hf.output_points);
    let (protocol, baseline) = ctx.stage("dephasing", |_| {
        let s0 = model.embed_singlet(&psi_f)?;
        let p = ensemble_dephasing(&model, &s0, &times, &fields, |s| return_probability(&psi_f, &model.singlet_part(s)))?;
        let r0 = model.embed_singlet(&ref_f)?;
        let r = ensemble_dephasing(&model, &r0, &times, &fields, |s| return_probability(&ref_f, &model.singlet_part(s)))?;
        Ok((p, r))
    })?;
    let mut dt = Table::new(
        "ground-state population regained after hold and reversed protocol",
        vec![
            Column::new("hold", "ps"),
            Column::new("protocol_mean", ""),
            Column::new("protocol_stderr", ""),
            Column::new("ground_only_mean", ""),
            Column::new("ground_only_stderr", ""),
        ],
    )
    .note(format!("B_nuc = {} mT per component, {} samples, seed {}", hf.b_nuc_mt, hf.n_samples, hf.seed))
    .note("ground_only: same hold without the optimized pulse (system left in the ground state)");
    for i in 0..times.len() {
        dt.push(vec![ctx.ps(times[i]), protocol.mean[i], protocol.stderr[i], baseline.mean[i], baseline.stderr[i]]);
    }
    ctx.write_table("dephasing.tsv", &dt)?;
    let last = times.len() - 1;
    ctx.manifest.result("hold.return_ground_population", protocol.mean[last]);
    ctx.manifest.result("hold.return_ground_stderr", protocol.stderr[last]);
    ctx.manifest.result("hold.ground_only_population", baseline.mean[last]);
    ctx.manifest.result("hold.ground_only_stderr", baseline.stderr[last]);
    ctx.manifest.result("hold.max_norm_drift", protocol.max_norm_drift.max(baseline.max_norm_drift));
    Ok(())
}

fn dephasing(ctx: &mut Ctx) -> Result<()> {
    let spec = ctx.cfg.dephasing.clone().expect("validated");
    let hf = ctx.cfg.hyperfine.clone().expect("validated");
    let idx = ctx.even_index(spec.state, "dephasing.state")?;
    let xi = ctx.xi(spec.field_kv_per_m);
    let model = ctx.stage("hyperfine_model", |ctx| {
        let red = ctx.singlets()?;
        let tred = ctx.triplets()?;
        let (se, _, svec) = states_at(&red, xi, spec.n_keep)?;
        let (te, _, tvec) = states_at(&tred, xi, hf.n_triplet)?;
        let sb = ctx.basis(Sector::Symmetric, Parity::Even);
        let tb = ctx.basis(Sector::Antisymmetric, Parity::Even);
        let spatial = SpatialCoupling::new(&sb, &tb, &svec, &tvec)?;
        SpinSpaceModel::new(se, te, spatial, ctx.params.gamma_e() / ctx.units.bfield_unit)
    })?;
    if idx >= model.n_singlet() {
        return Err(Error::config("dephasing.state", "state outside dephasing.n_keep"));
    }
    if idx < model.n_triplet() {
        ctx.manifest.result(
            "singlet_triplet_splitting_ueV",
            1e3 * ctx.mev(model.singlet_energies[idx] - model.triplet_energies[idx]),
        );
    }
    let strengths = if spec.b_nuc_mt.is_empty() { vec![hf.b_nuc_mt] } else { spec.b_nuc_mt.clone() };
    let hold = ctx.units.time_to_internal(hf.hold_ps);
    let times = uniform_grid(0.0, hold, hf.output_points);
    let s0 = model.embed_singlet(&basis_state(model.n_singlet(), idx))?;
    let mut cols = vec![Column::new("t", "ps")];
    for b in &strengths {
        cols.push(Column::new(format!("P_S(B={b}mT)"), ""));
        cols.push(Column::new(format!("stderr(B={b}mT)"), ""));
    }
    let mut results = Vec::new();
    for &b in &strengths {
        let fields = sample_nuclear_fields(b * 1e-3, hf.n_samples, hf.seed)?;
        let r = ctx.stage(&format!("dephasing:{b}mT"), |_| ensemble_dephasing(&model, &s0, &times, &fields, |s| model.singlet_probability(s)))?;
        let last = times.len() - 1;
        ctx.manifest.result(format!("b{b}mT.final_singlet_probability"), r.mean[last]);
        ctx.manifest.result(format!("b{b}mT.final_stderr"), r.stderr[last]);
        ctx.manifest.result(format!("b{b}mT.max_norm_drift"), r.max_norm_drift);
        results.push(r);
    }
    let label = ctx.label_of(idx);
    let mut table = Table::new(format!("singlet probability of state {label} under frozen nuclear fields"), cols)
        .note(format!("{} samples per strength, seed {}, field {} kV/m", hf.n_samples, hf.seed, spec.field_kv_per_m));
    for i in 0..times.len() {
        let mut row = vec![ctx.ps(times[i])];
        for r in &results {
            row.push(r.mean[i]);
            row.push(r.stderr[i]);
        }
        table.push(row);
    }
    ctx.write_table("dephasing.tsv", &table)?;
    Ok(())
}
