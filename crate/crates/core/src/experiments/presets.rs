//! Scenario files shipped with the crate (`presets/*.toml`).

use super::config::ScenarioConfig;
use crate::error::{Error, Result};

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

macro_rules! preset {
    ($name:literal, $summary:literal) => {
        Preset { name: $name, summary: $summary, text: include_str!(concat!("../../presets/", $name, ".toml")) }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!("fig2", "singlet and triplet spectrum versus static field"),
    preset!("fig3", "|0> -> |2>: intuitive pulse and optimized pulses at 111 and 67 ps"),
    preset!("fig4", "field-free evolution of the charge-localized state"),
    preset!("fig5", "charge localization: intuitive pulse sequence versus optimized pulse"),
    preset!("fig6", "charge localization at 67 ps with energy and structure penalties"),
    preset!("fig7", "charge localization from a constant initial field"),
    preset!("fig8", "optimized transfer at the anticrossing, switch, hold and readout"),
    preset!("dephasing", "ground-state singlet dephasing for several nuclear field strengths"),
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn load(name: &str) -> Result<ScenarioConfig> {
    let p = find(name).ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`")))?;
    ScenarioConfig::from_toml(p.text)
}
