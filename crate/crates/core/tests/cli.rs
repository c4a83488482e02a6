//! End-to-end runs of the `qdot` binary on small bases: validation exit
//! codes, presets, cache reuse and invalidation, and reproducible output.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_SWEEP: &str = r#"
schema_version = 1
name = "small-sweep"
task = "spectrum_sweep"

[material]
preset = "gaas"

[basis]
n_x_max = 6
n_y_max = 2
n_reduced = 40
n_keep = 10

[output]
directory = "unused"

[sweep]
field_min_kv_per_m = -5.0
field_max_kv_per_m = 5.0
n_points = 11
n_states = 4
"#;

const SMALL_TRANSFER: &str = r#"
schema_version = 1
name = "small-transfer"
task = "state_transfer"

[material]
preset = "gaas"

[basis]
n_x_max = 6
n_y_max = 2
n_reduced = 40
n_keep = 10

[output]
directory = "unused"

[transfer]
initial = 0
target = 3
dt = 0.5

[[transfer.pulses]]
kind = "intuitive"
label = "pi"

[[transfer.pulses.segments]]
transition = [0, 3]
duration_ps = 400.0
envelope = "sin2"
area = 1.0
"#;

fn qdot(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdot"))
        .arg("--cache-dir")
        .arg(cache)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn qdot")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(cache: &Path, config: &str, out: &Path) -> Value {
    let o = qdot(cache, &["run", config, "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "run failed: {}", stderr(&o));
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn assembly_seconds(m: &Value) -> f64 {
    m["stages"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["stage"].as_str().unwrap().starts_with("assembly"))
        .map(|s| s["seconds"].as_f64().unwrap())
        .sum()
}

fn tables(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn validate_accepts_presets_and_rejects_bad_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    for name in ["fig2", "fig3", "fig8", "dephasing"] {
        let o = qdot(&cache, &["validate", name]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }

    let no_task = write(tmp.path(), "no_task.toml", &SMALL_SWEEP.replace("task = \"spectrum_sweep\"", ""));
    let o = qdot(&cache, &["validate", &no_task]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("task"), "{}", stderr(&o));

    let bad_keep = write(tmp.path(), "bad_keep.toml", &SMALL_SWEEP.replace("n_keep = 10", "n_keep = 400"));
    let o = qdot(&cache, &["validate", &bad_keep]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("basis.n_keep"), "{}", stderr(&o));

    let typo = write(tmp.path(), "typo.toml", &SMALL_SWEEP.replace("n_states", "n_stats"));
    let o = qdot(&cache, &["validate", &typo]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_stats"), "{}", stderr(&o));

    let o = qdot(&cache, &["run", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn presets_list_and_show() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qdot(tmp.path(), &["presets", "list"]);
    assert!(o.status.success());
    let listing = String::from_utf8(o.stdout).unwrap();
    for name in ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "dephasing"] {
        assert!(listing.lines().any(|l| l.starts_with(name)), "{name} missing from\n{listing}");
    }
    let o = qdot(tmp.path(), &["presets", "show", "fig4"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(qdot::experiments::ScenarioConfig::from_toml(&text).is_ok());
    assert_eq!(qdot(tmp.path(), &["presets", "show", "fig99"]).status.code(), Some(1));
}

#[test]
fn cache_is_reused_invalidated_and_repaired() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let config = write(tmp.path(), "sweep.toml", SMALL_SWEEP);

    let cold = run(&cache, &config, &tmp.path().join("cold"));
    assert_eq!(cold["status"], "ok");
    assert!(cold["cache_misses"].as_u64().unwrap() > 0);
    assert!(assembly_seconds(&cold) > 0.0);

    let warm = run(&cache, &config, &tmp.path().join("warm"));
    assert_eq!(warm["cache_misses"], 0);
    assert!(warm["cache_hits"].as_u64().unwrap() > 0);
    assert_eq!(assembly_seconds(&warm), 0.0);
    assert_eq!(tables(&tmp.path().join("cold")), tables(&tmp.path().join("warm")));

    // A different truncation is a different artifact.
    let wider = write(tmp.path(), "wider.toml", &SMALL_SWEEP.replace("n_x_max = 6", "n_x_max = 7"));
    let m = run(&cache, &wider, &tmp.path().join("wider"));
    assert!(m["cache_misses"].as_u64().unwrap() > 0);

    let info = qdot(&cache, &["cache", "info"]);
    assert!(info.status.success());
    let listing = String::from_utf8(info.stdout).unwrap();
    assert!(!listing.contains("invalid"), "{listing}");

    // Corrupt every entry; the next run must rebuild rather than fail.
    for e in std::fs::read_dir(&cache).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            let bytes = std::fs::read(&p).unwrap();
            std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        }
    }
    let listing = String::from_utf8(qdot(&cache, &["cache", "info"]).stdout).unwrap();
    assert!(listing.contains("invalid"), "{listing}");
    let repaired = run(&cache, &config, &tmp.path().join("repaired"));
    assert_eq!(repaired["status"], "ok");
    assert!(repaired["cache_misses"].as_u64().unwrap() > 0);
    assert_eq!(tables(&tmp.path().join("cold")), tables(&tmp.path().join("repaired")));

    let cleared = qdot(&cache, &["cache", "clear"]);
    assert!(cleared.status.success());
    let listing = String::from_utf8(qdot(&cache, &["cache", "info"]).stdout).unwrap();
    assert!(listing.contains("0 entries"), "{listing}");
}

#[test]
fn state_transfer_runs_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "transfer.toml", SMALL_TRANSFER);
    // Separate caches so the second run recomputes everything.
    let a = run(&tmp.path().join("c1"), &config, &tmp.path().join("a"));
    let b = run(&tmp.path().join("c2"), &config, &tmp.path().join("b"));
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["results"], b["results"]);
    assert_eq!(tables(&tmp.path().join("a")), tables(&tmp.path().join("b")));

    let y = a["results"]["pi.yield"].as_f64().unwrap();
    let drift = a["results"]["pi.max_norm_drift"].as_f64().unwrap();
    assert!(y > 0.99, "resonant pi pulse yield {y}");
    assert!(drift < 1e-9, "{drift}");
}
