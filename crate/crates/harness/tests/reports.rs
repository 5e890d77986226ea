use std::collections::BTreeMap;
use std::path::Path;

use dem_harness::{run, ExperimentConfig};
use serde_json::{json, Value};

fn configs_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped_value(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(configs_dir().join(format!("{name}.json"))).unwrap()).unwrap()
}

fn config(value: Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&value.to_string()).unwrap()
}

fn read_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    r.records()
        .map(|rec| {
            header
                .iter()
                .cloned()
                .zip(rec.unwrap().iter().map(String::from))
                .collect()
        })
        .collect()
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn aggregates_match_metrics_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = shipped_value("benchmark_windy");
    v["seeds"] = json!([1, 2, 3, 4, 5]);
    run(&config(v), Some(dir.path())).unwrap();
    let mut groups: BTreeMap<[String; 5], Vec<f64>> = BTreeMap::new();
    for row in read_rows(&dir.path().join("metrics.csv")) {
        let key = ["estimator", "setting", "metric", "channel", "reference"].map(|k| row[k].clone());
        if let Ok(x) = row["value"].parse::<f64>() {
            groups.entry(key).or_default().push(x);
        }
    }
    let aggregates = read_rows(&dir.path().join("aggregates.csv"));
    assert_eq!(aggregates.len(), groups.len());
    for a in aggregates {
        let key = ["estimator", "setting", "metric", "channel", "reference"].map(|k| a[k].clone());
        let mut vals = groups[&key].clone();
        vals.sort_by(f64::total_cmp);
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let get = |k: &str| a[k].parse::<f64>().unwrap();
        assert_eq!(a["runs"], vals.len().to_string());
        assert!(close(get("median"), quantile(&vals, 0.5)), "{key:?}");
        assert!(close(get("q1"), quantile(&vals, 0.25)));
        assert!(close(get("q3"), quantile(&vals, 0.75)));
        assert!(close(get("iqr"), quantile(&vals, 0.75) - quantile(&vals, 0.25)));
        assert!(close(get("mean"), mean));
        assert!(close(get("std"), std));
    }
}

#[test]
fn shipped_configs_round_trip() {
    for entry in std::fs::read_dir(configs_dir()).unwrap().flatten() {
        let text = std::fs::read_to_string(entry.path()).unwrap();
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        again.validate().unwrap();
        assert_eq!(cfg, again, "{}", entry.path().display());
        assert_eq!(cfg.hash(), again.hash());
    }
}

#[test]
fn hash_ignores_name_seeds_and_output() {
    let a = shipped_value("sweep_p");
    let mut b = a.clone();
    b["name"] = json!("renamed");
    b["seeds"] = json!([7]);
    b["output_dir"] = json!("elsewhere");
    assert_eq!(config(a.clone()).hash(), config(b).hash());
    let mut c = a.clone();
    c["dem"]["k"] = json!(50.0);
    assert_ne!(config(a).hash(), config(c).hash());
}

#[test]
fn zero_magnitude_probes_leave_free_energy_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = shipped_value("landscape");
    v["seeds"] = json!([1]);
    v["experiment"]["magnitudes"] = json!([0.0, 0.1]);
    v["experiment"]["sample_times"] = json!(3);
    let report = run(&config(v), Some(dir.path())).unwrap();
    let check = report
        .check_named("zero_magnitude_deltas_vanish")
        .expect("check emitted");
    assert!(check.passed, "{}", check.detail);
}

#[test]
fn single_seed_rerun_reproduces_its_rows() {
    let (all, one) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut v = shipped_value("prior_sweep");
    v["seeds"] = json!([1, 2, 3]);
    v["experiment"]["precisions"] = json!([0.01, 1.0, 100.0]);
    let full = run(&config(v.clone()), Some(all.path())).unwrap();
    v["seeds"] = json!([2]);
    let single = run(&config(v), Some(one.path())).unwrap();
    let from_full: Vec<_> = full.metrics.iter().filter(|m| m.seed == 2).collect();
    let from_single: Vec<_> = single.metrics.iter().collect();
    assert!(!from_single.is_empty());
    assert_eq!(from_full, from_single);
}

#[test]
fn repeated_runs_write_identical_csvs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut v = shipped_value("noise_characterization");
    v["seeds"] = json!([1, 2]);
    let cfg = config(v);
    let ra = run(&cfg, Some(a.path())).unwrap();
    run(&cfg, Some(b.path())).unwrap();
    for f in ra
        .files
        .iter()
        .filter(|f| f.path.extension().is_some_and(|e| e == "csv"))
    {
        let (x, y) = (
            std::fs::read(a.path().join(&f.path)).unwrap(),
            std::fs::read(b.path().join(&f.path)).unwrap(),
        );
        assert_eq!(x, y, "{}", f.path.display());
    }
}

#[test]
fn invalid_fields_are_all_reported() {
    let mut v = shipped_value("benchmark_windy");
    v["noise"]["sigma"] = json!(-1.0);
    v["dem"]["p"] = json!(40);
    v["seeds"] = json!([]);
    let errors = match config(v).validate() {
        Err(dem_harness::HarnessError::Invalid(e)) => e,
        other => panic!("expected field errors, got {other:?}"),
    };
    let fields: Vec<&str> = errors.iter().map(|e| e.field.as_str()).collect();
    for f in ["noise.sigma", "dem.p", "seeds"] {
        assert!(fields.contains(&f), "{f} not in {fields:?}");
    }
}
