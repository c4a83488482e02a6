use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qdot::experiments::{default_cache_dir, presets, run_scenario, Cache, RunOptions, ScenarioConfig};
use qdot::Error;

#[derive(Parser)]
#[command(name = "qdot", version, about = "Two-electron double quantum dot simulations")]
struct Cli {
    /// Cache directory (default: $QDOT_CACHE_DIR, then ~/.cache/qdot).
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a named preset.
    Run {
        /// Path to a TOML scenario, or a preset name.
        config: String,
        /// Output directory (overrides `output.directory`).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate { config: String },
    /// Shipped scenario presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Inspect or empty the artifact cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print the TOML of a preset.
    Show { name: String },
}

#[derive(Subcommand)]
enum CacheAction {
    Info,
    Clear,
}

fn load(config: &str) -> qdot::Result<ScenarioConfig> {
    let path = Path::new(config);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        ScenarioConfig::from_toml(&text)
    } else if presets::find(config).is_some() {
        presets::load(config)
    } else {
        Err(Error::config("config", format!("no such file or preset: {config}")))
    }
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config { .. } | Error::ConfigIssues(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cache = Cache::new(cli.cache_dir.unwrap_or_else(default_cache_dir));
    let result = match cli.command {
        Command::Run { config, output } => load(&config).and_then(|cfg| {
            let manifest = run_scenario(&cfg, &RunOptions { cache, output_dir: output })?;
            println!("{}: {} ({} cache hits, {} misses)", manifest.name, manifest.status, manifest.cache_hits, manifest.cache_misses);
            for (k, v) in &manifest.results {
                println!("  {k:<44} {v:.6}");
            }
            if let Some(dir) = manifest.outputs.first().and_then(|p| p.parent()) {
                println!("outputs in {}", dir.display());
            }
            Ok(())
        }),
        Command::Validate { config } => load(&config).map(|cfg| println!("{}: ok (task {})", cfg.name, cfg.task.map_or("?", |t| t.name()))),
        Command::Presets { action: PresetAction::List } => {
            for p in presets::PRESETS {
                println!("{:<10} {}", p.name, p.summary);
            }
            Ok(())
        }
        Command::Presets { action: PresetAction::Show { name } } => match presets::find(&name) {
            Some(p) => {
                print!("{}", p.text);
                Ok(())
            }
            None => Err(Error::config("preset", format!("unknown preset `{name}`"))),
        },
        Command::Cache { action: CacheAction::Info } => cache.entries().map(|entries| {
            println!("cache directory {}", cache.dir().display());
            let total: u64 = entries.iter().map(|e| e.bytes).sum();
            for e in &entries {
                let name = e.file.file_name().unwrap_or_default().to_string_lossy();
                let kind = e.kind.as_deref().unwrap_or("?");
                let state = if e.valid { "" } else { "  (invalid)" };
                println!("  {name:<40} {kind:<8} {:>12} bytes{state}", e.bytes);
            }
            println!("{} entries, {total} bytes", entries.len());
        }),
        Command::Cache { action: CacheAction::Clear } => cache.clear().map(|n| println!("removed {n} entries from {}", cache.dir().display())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
