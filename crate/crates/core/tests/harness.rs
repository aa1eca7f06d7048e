use std::fs;
use std::path::Path;

use retstat::harness::{radius_sweep, read_artifacts, run_experiment, ExperimentConfig, FAILED_MARKER};

const Z: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn config(dir: &Path, body: &str) -> ExperimentConfig {
    let text = format!("seed = 11\noutput_dir = {:?}\n{body}", dir.display().to_string());
    ExperimentConfig::from_toml(&text).unwrap()
}

fn doubling_ks(dir: &Path) -> ExperimentConfig {
    config(
        dir,
        &format!(
            r#"
[map]
spec = "doubling"

[target]
center = {Z:?}
radius = 0.0009765625

[analyses]
ks = true
hitting = true
"#
        ),
    )
}

#[test]
fn empty_pipeline_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "[map]\nspec = \"doubling\"\n");
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.config, cfg);
    assert!(report.measure.is_none() && report.returns.is_none() && report.kac.is_none());
    let files = read_artifacts(tmp.path()).unwrap();
    let names: Vec<&str> = files.keys().map(String::as_str).collect();
    assert_eq!(names, ["report.json", "summary.json", "timings.json"]);
    let summary: serde_json::Value = serde_json::from_slice(&files["summary.json"]).unwrap();
    assert_eq!(summary["map"], "doubling");
    assert!(summary["ks_distance"].is_null());
}

#[test]
fn doubling_ks_run_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_experiment(&doubling_ks(&tmp.path().join("a"))).unwrap();
    let returns = a.returns.as_ref().unwrap();
    assert_eq!(returns.n, 20_000);
    assert!(returns.ks_distance <= 0.05, "{returns:?}");
    assert!(returns.chebyshev.ok);

    let mut cfg = doubling_ks(&tmp.path().join("b"));
    cfg.workers = Some(3);
    let b = run_experiment(&cfg).unwrap();
    let (fa, fb) = (read_artifacts(&a.output_dir).unwrap(), read_artifacts(&b.output_dir).unwrap());
    for name in ["returns.csv", "hitting.csv", "summary.json"] {
        assert_eq!(fa[name], fb[name], "{name} differs");
    }
    assert!(std::str::from_utf8(&fa["returns.csv"]).unwrap().starts_with("start,raw_time,censored,normalized\n"));
    let summary: serde_json::Value = serde_json::from_slice(&fa["summary.json"]).unwrap();
    for key in ["map", "U", "mu_U", "n", "censored_fraction", "ks_distance", "kac_mean", "chebyshev_ok"] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn normalization_comes_from_the_same_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        &format!(
            r#"
[map]
spec = "doubling"

[target]
center = {Z:?}
radius = 0.001953125

[sampling]
n_samples = 2000

[induce]
domain = [[0.5, 1.0]]
kac_entries = 10000

[analyses]
ks = true
hitting = true
poisson = true
sandwich = true
"#
        ),
    );
    let report = run_experiment(&cfg).unwrap();
    let id = &report.measure.as_ref().unwrap().provenance;
    assert!(id.starts_with("measure:"));
    assert_eq!(&report.returns.as_ref().unwrap().mu_provenance, id);
    assert_eq!(&report.hitting.as_ref().unwrap().mu_provenance, id);
    assert_eq!(&report.poisson.as_ref().unwrap().mu_provenance, id);
    assert_eq!(report.sandwich.as_ref().unwrap().mu_u, report.measure.as_ref().unwrap().mu_u);

    let mut other = cfg.clone();
    other.seed += 1;
    other.output_dir = tmp.path().join("other");
    let again = run_experiment(&other).unwrap();
    assert_ne!(&again.measure.unwrap().provenance, id);
}

#[test]
fn failure_leaves_marker_and_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    // an orbit far too short to resolve any decay above the noise floor
    let cfg = config(
        tmp.path(),
        &format!(
            r#"
[map]
spec = "doubling"

[target]
center = {Z:?}
radius = 0.0009765625

[sampling]
n_samples = 2000

[analyses]
ks = true
decay = true

[decay]
orbit_len = 200
bins = 64
"#
        ),
    );
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.to_string().starts_with("decay:"), "{err}");
    let marker = fs::read_to_string(tmp.path().join(FAILED_MARKER)).unwrap();
    assert!(marker.starts_with("decay:"));
    assert!(tmp.path().join("returns.csv").exists());
    assert!(!tmp.path().join("summary.json").exists());

    // a later successful run clears the marker
    let ok = config(tmp.path(), "[map]\nspec = \"doubling\"\n");
    run_experiment(&ok).unwrap();
    assert!(!tmp.path().join(FAILED_MARKER).exists());
}

#[test]
fn single_radius_sweep_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = doubling_ks(&tmp.path().join("run"));
    cfg.analyses.hitting = false;
    cfg.sampling.n_samples = 5_000;
    let run = run_experiment(&cfg).unwrap();
    cfg.output_dir = tmp.path().join("sweep");
    let table = radius_sweep(&cfg, &[0.0009765625]).unwrap();
    assert_eq!(table.rows.len(), 1);
    let row = &table.rows[0];
    let returns = run.returns.unwrap();
    assert_eq!(row.mu_u, Some(run.measure.unwrap().mu_u));
    assert_eq!(row.ks_distance, Some(returns.ks_distance));
    assert_eq!(row.tau_u, returns.tau_u);
    assert_eq!(row.censored_fraction, Some(returns.censored_fraction));
    assert!(table.spearman.is_none());
    assert!(tmp.path().join("sweep/sweep.csv").exists());
}

#[test]
fn doubling_sweep_converges() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = doubling_ks(tmp.path());
    let radii: Vec<f64> = (6..=12).map(|k| 2f64.powi(-k)).collect();
    let table = radius_sweep(&cfg, &radii).unwrap();
    assert!(table.rows.iter().all(|r| r.error.is_none()), "{table:?}");
    let rho = table.spearman.unwrap();
    assert!(rho > 0.0, "{}", table.to_csv());
}

#[test]
fn lsv_sweep_converges() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        r#"
[map]
spec = "lsv_alpha(0.5)"

[target]
center = 0.7
radius = 0.01

[sampling]
n_samples = 20000

[analyses]
ks = true
"#,
    );
    let table = radius_sweep(&cfg, &[1e-2, 3e-3, 1e-3, 3e-4, 1e-4]).unwrap();
    assert!(table.rows.iter().all(|r| r.error.is_none()), "{table:?}");
    assert!(table.spearman.unwrap() > 0.0, "{}", table.to_csv());
}

#[test]
fn sweep_rejects_unordered_radii() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = doubling_ks(tmp.path());
    assert!(radius_sweep(&cfg, &[1e-3, 1e-2]).is_err());
    assert!(radius_sweep(&cfg, &[]).is_err());
}
