//! Tab-separated output tables with a commented header, and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::model::UnitSystem;

/// Column name with its unit, written as `name[unit]`.
#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Column { name: name.into(), unit: unit.into() }
    }
}

/// Builds a table in memory; values are written with 10 significant digits
/// so reruns produce identical files.
#[derive(Debug, Clone)]
pub struct Table {
    title: String,
    notes: Vec<String>,
    columns: Vec<Column>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(title: impl Into<String>, columns: Vec<Column>) -> Self {
        Table { title: title.into(), notes: Vec::new(), columns, rows: Vec::new() }
    }

    pub fn note(mut self, line: impl Into<String>) -> Self {
        self.notes.push(line.into());
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self, config_hash: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.title);
        let _ = writeln!(s, "# qdot {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# config_hash {config_hash}");
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        let header: Vec<String> = self
            .columns
            .iter()
            .map(|c| if c.unit.is_empty() { c.name.clone() } else { format!("{}[{}]", c.name, c.unit) })
            .collect();
        let _ = writeln!(s, "# {}", header.join("\t"));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
            let _ = writeln!(s, "{}", cells.join("\t"));
        }
        s
    }
}

/// Unit conversions recorded in the manifest: size of one internal unit.
#[derive(Debug, Clone, Serialize)]
pub struct UnitRecord {
    pub length_nm: f64,
    #[serde(rename = "energy_meV")]
    pub energy_mev: f64,
    pub time_ps: f64,
    #[serde(rename = "efield_V_per_m")]
    pub efield_v_per_m: f64,
    #[serde(rename = "bfield_T")]
    pub bfield_t: f64,
}

impl From<&UnitSystem> for UnitRecord {
    fn from(u: &UnitSystem) -> Self {
        UnitRecord {
            length_nm: u.length_unit,
            energy_mev: u.energy_unit,
            time_ps: u.time_unit,
            efield_v_per_m: u.efield_unit,
            bfield_t: u.bfield_unit,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CacheRecord {
    pub artifact: String,
    pub status: super::cache::Lookup,
}

/// What a run did: inputs, cache use, timings, outputs and headline numbers.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub name: String,
    pub task: String,
    pub config_hash: String,
    pub library_version: String,
    pub status: String,
    pub error: Option<String>,
    pub units: Option<UnitRecord>,
    pub cache: Vec<CacheRecord>,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<PathBuf>,
    /// Scalar results, keyed by name with the unit as suffix where physical.
    pub results: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(name: &str, task: &str, config_hash: &str) -> Self {
        RunManifest {
            name: name.to_string(),
            task: task.to_string(),
            config_hash: config_hash.to_string(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            status: "running".into(),
            error: None,
            units: None,
            cache: Vec::new(),
            cache_hits: 0,
            cache_misses: 0,
            stages: Vec::new(),
            outputs: Vec::new(),
            results: BTreeMap::new(),
        }
    }

    pub fn result(&mut self, key: impl Into<String>, value: f64) {
        self.results.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.results.get(key).copied()
    }

    /// Total seconds spent in stages whose name starts with `prefix`.
    pub fn stage_seconds(&self, prefix: &str) -> f64 {
        self.stages.iter().filter(|s| s.stage.starts_with(prefix)).map(|s| s.seconds).sum()
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
