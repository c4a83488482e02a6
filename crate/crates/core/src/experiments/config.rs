//! Scenario configuration files (TOML, `schema_version = 1`).
//!
//! Physical inputs carry their unit in the key name (`_ps`, `_kv_per_m`,
//! `_mT`, `_meV`); pulse-optimization knobs that the optimizer works with
//! directly (`dt`, guess amplitude and frequency, penalty weights) are in
//! internal units.

use serde::{Deserialize, Serialize};

use crate::control::{PenaltyConfig, PenaltyKind};
use crate::dynamics::SwitchShape;
use crate::error::{Error, Result};
use crate::model::MaterialParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SpectrumSweep,
    StateTransfer,
    ClsPreparation,
    AnticrossingTransfer,
    Dephasing,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::SpectrumSweep => "spectrum_sweep",
            Task::StateTransfer => "state_transfer",
            Task::ClsPreparation => "cls_preparation",
            Task::AnticrossingTransfer => "anticrossing_transfer",
            Task::Dephasing => "dephasing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub task: Option<Task>,
    pub material: MaterialSpec,
    pub basis: BasisSpec,
    #[serde(default)]
    pub output: OutputSpec,
    pub sweep: Option<SweepSpec>,
    pub transfer: Option<TransferSpec>,
    pub cls: Option<ClsSpec>,
    pub anticrossing: Option<AnticrossingSpec>,
    pub switch: Option<SwitchSpec>,
    pub hyperfine: Option<HyperfineSpec>,
    pub dephasing: Option<DephasingSpec>,
}

/// A named preset, optionally with individual parameters overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub preset: Option<String>,
    pub m_star: Option<f64>,
    pub eps_r: Option<f64>,
    pub g_star: Option<f64>,
    #[serde(rename = "hbar_omega_meV")]
    pub hbar_omega_mev: Option<f64>,
    pub d_nm: Option<f64>,
}

impl MaterialSpec {
    pub fn resolve(&self) -> Result<MaterialParams> {
        let base = match &self.preset {
            Some(name) => Some(
                MaterialParams::preset(name)
                    .ok_or_else(|| Error::config("material.preset", format!("unknown preset `{name}`")))?,
            ),
            None => None,
        };
        let pick = |v: Option<f64>, b: Option<f64>, path: &str| {
            v.or(b).ok_or_else(|| Error::config(format!("material.{path}"), "required without a preset"))
        };
        let p = MaterialParams {
            m_star: pick(self.m_star, base.map(|b| b.m_star), "m_star")?,
            eps_r: pick(self.eps_r, base.map(|b| b.eps_r), "eps_r")?,
            g_star: pick(self.g_star, base.map(|b| b.g_star), "g_star")?,
            hbar_omega: pick(self.hbar_omega_mev, base.map(|b| b.hbar_omega), "hbar_omega_meV")?,
            d: pick(self.d_nm, base.map(|b| b.d), "d_nm")?,
        };
        p.validate().map_err(|e| Error::config("material", e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub n_x_max: usize,
    pub n_y_max: usize,
    /// Field-free eigenstates retained for field-dependent diagonalization.
    #[serde(default = "default_n_reduced")]
    pub n_reduced: usize,
    /// Eigenstates used in time propagation.
    #[serde(default = "default_n_keep")]
    pub n_keep: usize,
}

fn default_n_reduced() -> usize {
    200
}

fn default_n_keep() -> usize {
    crate::spectrum::DEFAULT_N_KEEP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub directory: String,
    /// Keep every n-th propagation step in time series.
    pub stride: usize,
    /// Number of lowest eigenstate populations written per time series.
    pub n_populations: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { directory: "output".into(), stride: 10, n_populations: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub field_min_kv_per_m: f64,
    pub field_max_kv_per_m: f64,
    pub n_points: usize,
    pub n_states: usize,
    #[serde(default = "yes")]
    pub triplets: bool,
}

fn yes() -> bool {
    true
}

/// Where a transfer starts and what it aims for. State labels count all
/// singlets at zero field in ascending energy, both y-parities included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSpec {
    #[serde(default)]
    pub initial: usize,
    /// Target label; ignored for `cls_preparation`, whose target is the CLS.
    pub target: Option<usize>,
    /// Internal time step of the control grid.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub pulses: Vec<PulseSpec>,
}

fn default_dt() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseSpec {
    Intuitive(IntuitiveSpec),
    Optimize(OptimizeSpec),
}

impl PulseSpec {
    pub fn label(&self) -> &str {
        match self {
            PulseSpec::Intuitive(p) => &p.label,
            PulseSpec::Optimize(p) => &p.label,
        }
    }
}

/// A sequence of resonant segments played back to back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntuitiveSpec {
    pub label: String,
    pub segments: Vec<SegmentSpec>,
    /// Common amplitude factors tried on top of the nominal amplitudes; the
    /// best final yield wins.
    #[serde(default)]
    pub amplitude_scan: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    #[default]
    Sin2,
    /// sin^2 ramps of `ramp_cycles` carrier periods at both ends, flat between.
    Ramp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    /// Pair of state labels fixing the carrier `|E_b - E_a|`.
    pub transition: [usize; 2],
    pub duration_ps: f64,
    #[serde(default)]
    pub envelope: Envelope,
    #[serde(default = "default_ramp_cycles")]
    pub ramp_cycles: f64,
    /// Rotation angle in units of pi (1 = full transfer, 0.5 = equal superposition).
    pub area: Option<f64>,
    pub amplitude_kv_per_m: Option<f64>,
}

fn default_ramp_cycles() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessShape {
    /// `amplitude sin^2(pi t / T) cos(omega t)`
    Sin2Cos,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuessSpec {
    pub shape: GuessShape,
    /// Internal field units.
    pub amplitude: f64,
    /// Internal angular frequency; defaults to the initial-target resonance.
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    pub label: String,
    pub duration_ps: f64,
    pub penalty: PenaltyConfig,
    pub guess: GuessSpec,
    pub max_iterations: usize,
    #[serde(default = "default_target_yield")]
    pub target_yield: f64,
}

fn default_target_yield() -> f64 {
    0.9999
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClsSpec {
    /// Labels of the two ionic states.
    #[serde(default = "default_ionic")]
    pub ionic: [usize; 2],
    /// Field-free evolution of the CLS, when set.
    pub free_evolution_ps: Option<f64>,
    #[serde(default)]
    pub density_times_ps: Vec<f64>,
    #[serde(default = "default_density_points")]
    pub density_points: usize,
    /// Half width of the density window.
    #[serde(default = "default_density_extent")]
    pub density_extent_nm: f64,
}

fn default_ionic() -> [usize; 2] {
    [5, 6]
}

fn default_density_points() -> usize {
    241
}

fn default_density_extent() -> f64 {
    250.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnticrossingSpec {
    /// Adiabatic levels whose avoided crossing is used.
    #[serde(default = "default_pair")]
    pub pair: [usize; 2],
    /// Field window searched for the anticrossing.
    pub search_kv_per_m: [f64; 2],
    #[serde(default = "default_search_points")]
    pub search_points: usize,
    /// Adiabatic states retained through pulse, switch and hold.
    #[serde(default = "default_ac_keep")]
    pub n_keep: usize,
    #[serde(default = "default_table_points")]
    pub table_points: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub pulse: OptimizeSpec,
}

fn default_pair() -> [usize; 2] {
    [0, 1]
}

fn default_search_points() -> usize {
    61
}

fn default_ac_keep() -> usize {
    10
}

fn default_table_points() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSpec {
    #[serde(default)]
    pub shape: SwitchShape,
    pub duration_ps: f64,
    /// Field at the end of the forward switch.
    #[serde(default)]
    pub field_end_kv_per_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperfineSpec {
    /// Standard deviation of each nuclear-field component.
    #[serde(rename = "b_nuc_mT")]
    pub b_nuc_mt: f64,
    pub n_samples: usize,
    pub hold_ps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Triplet eigenstates per spin projection.
    #[serde(default = "default_ac_keep")]
    pub n_triplet: usize,
    #[serde(default = "default_hold_points")]
    pub output_points: usize,
}

fn default_hold_points() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingSpec {
    /// Singlet label prepared at the start of the hold.
    #[serde(default)]
    pub state: usize,
    #[serde(default)]
    pub field_kv_per_m: f64,
    #[serde(default = "default_ac_keep")]
    pub n_keep: usize,
    /// Nuclear field strengths compared; defaults to the hyperfine value.
    #[serde(default, rename = "b_nuc_mT")]
    pub b_nuc_mt: Vec<f64>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let path = e.span().map(|s| locate_key(text, s.start)).unwrap_or_default();
            Error::config(path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that can be checked without running, collecting all
    /// problems with their field paths.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        let mut bad = |path: &str, reason: &str| issues.push(format!("{path}: {reason}"));

        if self.schema_version != SCHEMA_VERSION {
            bad("schema_version", &format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.name.trim().is_empty() {
            bad("name", "must not be empty");
        }
        if let Err(e) = self.material.resolve() {
            bad("material", &e.to_string());
        }
        if self.basis.n_reduced == 0 {
            bad("basis.n_reduced", "must be positive");
        }
        if self.basis.n_keep < 2 {
            bad("basis.n_keep", "need at least two states");
        }
        if self.basis.n_keep > self.basis.n_reduced {
            bad("basis.n_keep", "cannot exceed basis.n_reduced");
        }
        if self.output.directory.trim().is_empty() {
            bad("output.directory", "must not be empty");
        }
        if self.output.stride == 0 {
            bad("output.stride", "must be positive");
        }

        let Some(task) = self.task else {
            bad("task", "missing; expected one of spectrum_sweep, state_transfer, cls_preparation, anticrossing_transfer, dephasing");
            return Err(Error::ConfigIssues(issues));
        };
        let need = |present: bool, section: &str, issues: &mut Vec<String>| {
            if !present {
                issues.push(format!("{section}: required for task `{}`", task.name()));
            }
        };
        match task {
            Task::SpectrumSweep => {
                need(self.sweep.is_some(), "sweep", &mut issues);
                if let Some(s) = &self.sweep {
                    check_sweep(s, &mut issues);
                }
            }
            Task::StateTransfer => {
                need(self.transfer.is_some(), "transfer", &mut issues);
                if let Some(t) = &self.transfer {
                    if t.target.is_none() {
                        issues.push("transfer.target: required for task `state_transfer`".into());
                    }
                    if t.pulses.is_empty() {
                        issues.push("transfer.pulses: at least one pulse required".into());
                    }
                    check_transfer(t, self.basis.n_keep, &mut issues);
                }
            }
            Task::ClsPreparation => {
                need(self.cls.is_some(), "cls", &mut issues);
                if let Some(c) = &self.cls {
                    if c.ionic[0] == c.ionic[1] {
                        issues.push("cls.ionic: the two labels must differ".into());
                    }
                    if let Some(t) = c.free_evolution_ps {
                        positive(t, "cls.free_evolution_ps", &mut issues);
                        for (i, &d) in c.density_times_ps.iter().enumerate() {
                            if !(d >= 0.0 && d <= t) {
                                issues.push(format!("cls.density_times_ps[{i}]: must lie in [0, free_evolution_ps]"));
                            }
                        }
                    }
                    if c.density_points < 2 {
                        issues.push("cls.density_points: need at least two points".into());
                    }
                    positive(c.density_extent_nm, "cls.density_extent_nm", &mut issues);
                    let has_pulses = self.transfer.as_ref().is_some_and(|t| !t.pulses.is_empty());
                    if c.free_evolution_ps.is_none() && !has_pulses {
                        issues.push("cls: nothing to do; set free_evolution_ps or transfer.pulses".into());
                    }
                }
                if let Some(t) = &self.transfer {
                    check_transfer(t, self.basis.n_keep, &mut issues);
                }
            }
            Task::AnticrossingTransfer => {
                need(self.anticrossing.is_some(), "anticrossing", &mut issues);
                need(self.switch.is_some(), "switch", &mut issues);
                need(self.hyperfine.is_some(), "hyperfine", &mut issues);
                if let Some(a) = &self.anticrossing {
                    if !(a.search_kv_per_m[1] > a.search_kv_per_m[0]) {
                        issues.push("anticrossing.search_kv_per_m: must be ascending".into());
                    }
                    if a.pair[1] <= a.pair[0] {
                        issues.push("anticrossing.pair: second level must lie above the first".into());
                    }
                    if a.n_keep <= a.pair[1] || a.n_keep > self.basis.n_reduced {
                        issues.push("anticrossing.n_keep: must exceed the pair and not exceed basis.n_reduced".into());
                    }
                    if a.search_points < 3 {
                        issues.push("anticrossing.search_points: need at least three points".into());
                    }
                    if a.table_points < 2 {
                        issues.push("anticrossing.table_points: need at least two points".into());
                    }
                    positive(a.dt, "anticrossing.dt", &mut issues);
                    check_optimize(&a.pulse, "anticrossing.pulse", &mut issues);
                }
                if let Some(s) = &self.switch {
                    positive(s.duration_ps, "switch.duration_ps", &mut issues);
                }
                if let Some(h) = &self.hyperfine {
                    check_hyperfine(h, &mut issues);
                }
            }
            Task::Dephasing => {
                need(self.dephasing.is_some(), "dephasing", &mut issues);
                need(self.hyperfine.is_some(), "hyperfine", &mut issues);
                if let Some(d) = &self.dephasing {
                    if d.n_keep <= d.state || d.n_keep > self.basis.n_reduced {
                        issues.push("dephasing.n_keep: must exceed the state and not exceed basis.n_reduced".into());
                    }
                    for (i, &b) in d.b_nuc_mt.iter().enumerate() {
                        if !(b > 0.0) {
                            issues.push(format!("dephasing.b_nuc_mT[{i}]: must be positive"));
                        }
                    }
                }
                if let Some(h) = &self.hyperfine {
                    check_hyperfine(h, &mut issues);
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigIssues(issues))
        }
    }
}

fn positive(v: f64, path: &str, issues: &mut Vec<String>) {
    if !(v > 0.0 && v.is_finite()) {
        issues.push(format!("{path}: must be positive, got {v}"));
    }
}

fn check_sweep(s: &SweepSpec, issues: &mut Vec<String>) {
    if !(s.field_max_kv_per_m > s.field_min_kv_per_m) {
        issues.push("sweep.field_max_kv_per_m: must exceed field_min_kv_per_m".into());
    }
    if s.n_points < 2 {
        issues.push("sweep.n_points: need at least two points".into());
    }
    if s.n_states == 0 {
        issues.push("sweep.n_states: must be positive".into());
    }
}

fn check_transfer(t: &TransferSpec, n_keep: usize, issues: &mut Vec<String>) {
    positive(t.dt, "transfer.dt", issues);
    if t.initial >= n_keep * 2 {
        issues.push("transfer.initial: label far outside the retained states".into());
    }
    let mut labels = std::collections::HashSet::new();
    for (i, p) in t.pulses.iter().enumerate() {
        let base = format!("transfer.pulses[{i}]");
        if p.label().trim().is_empty() || !p.label().chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            issues.push(format!("{base}.label: must be non-empty and use only [A-Za-z0-9_-]"));
        }
        if !labels.insert(p.label().to_string()) {
            issues.push(format!("{base}.label: duplicate label `{}`", p.label()));
        }
        match p {
            PulseSpec::Intuitive(s) => {
                if s.segments.is_empty() {
                    issues.push(format!("{base}.segments: at least one segment required"));
                }
                for (j, seg) in s.segments.iter().enumerate() {
                    let sb = format!("{base}.segments[{j}]");
                    positive(seg.duration_ps, &format!("{sb}.duration_ps"), issues);
                    if seg.transition[0] == seg.transition[1] {
                        issues.push(format!("{sb}.transition: the two labels must differ"));
                    }
                    match (seg.area, seg.amplitude_kv_per_m) {
                        (Some(_), Some(_)) => issues.push(format!("{sb}: give either area or amplitude_kv_per_m, not both")),
                        (None, None) => issues.push(format!("{sb}: one of area or amplitude_kv_per_m is required")),
                        (Some(a), None) => positive(a, &format!("{sb}.area"), issues),
                        (None, Some(a)) => {
                            if !a.is_finite() {
                                issues.push(format!("{sb}.amplitude_kv_per_m: must be finite"));
                            }
                        }
                    }
                    if seg.envelope == Envelope::Ramp {
                        positive(seg.ramp_cycles, &format!("{sb}.ramp_cycles"), issues);
                    }
                }
                for (j, &f) in s.amplitude_scan.iter().enumerate() {
                    positive(f, &format!("{base}.amplitude_scan[{j}]"), issues);
                }
            }
            PulseSpec::Optimize(o) => check_optimize(o, &base, issues),
        }
    }
}

fn check_optimize(o: &OptimizeSpec, base: &str, issues: &mut Vec<String>) {
    positive(o.duration_ps, &format!("{base}.duration_ps"), issues);
    if o.max_iterations == 0 {
        issues.push(format!("{base}.max_iterations: must be positive"));
    }
    if !(o.target_yield > 0.0 && o.target_yield <= 1.0) {
        issues.push(format!("{base}.target_yield: must lie in (0, 1]"));
    }
    if let Err(e) = o.penalty.validate() {
        issues.push(format!("{base}.penalty: {e}"));
    }
    if o.penalty.kind == PenaltyKind::Energy && o.penalty.lambda1 != 0.0 {
        issues.push(format!("{base}.penalty.lambda1: only used by the structure penalty"));
    }
    if !o.guess.amplitude.is_finite() {
        issues.push(format!("{base}.guess.amplitude: must be finite"));
    }
    if let Some(w) = o.guess.omega {
        if !w.is_finite() {
            issues.push(format!("{base}.guess.omega: must be finite"));
        }
    }
}

fn check_hyperfine(h: &HyperfineSpec, issues: &mut Vec<String>) {
    positive(h.b_nuc_mt, "hyperfine.b_nuc_mT", issues);
    positive(h.hold_ps, "hyperfine.hold_ps", issues);
    if h.n_samples == 0 {
        issues.push("hyperfine.n_samples: must be positive".into());
    }
    if h.n_triplet == 0 {
        issues.push("hyperfine.n_triplet: must be positive".into());
    }
    if h.output_points < 2 {
        issues.push("hyperfine.output_points: need at least two points".into());
    }
}

/// Dotted key path of the table entry containing byte `offset`, best effort.
fn locate_key(text: &str, offset: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut pos = 0;
    for line in text.lines() {
        let end = pos + line.len() + 1;
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            table = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            key = k.trim().to_string();
        }
        if offset < end {
            break;
        }
        pos = end;
    }
    match (table.is_empty(), key.is_empty()) {
        (true, _) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}
