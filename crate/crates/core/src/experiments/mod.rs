//! Config-driven runs: scenario files, the artifact cache, output tables and
//! the task pipelines.

pub mod cache;
pub mod config;
pub mod output;
pub mod presets;
pub mod runner;

pub use cache::{default_cache_dir, Cache};
pub use config::{ScenarioConfig, Task};
pub use output::RunManifest;
pub use runner::{config_hash, run_scenario, RunOptions};
