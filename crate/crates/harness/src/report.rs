//! Report assembly and tidy CSV / JSON emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::Result;
use crate::stats::Summary;

/// Shortest round-trip text for a float, switching to exponent notation
/// outside `[1e-4, 1e7)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e7).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// One per-run metric, keyed by `(config hash, seed, estimator)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub seed: u64,
    pub estimator: String,
    /// Sweep coordinate (`p=3`, `pv=0.01`, a case label), empty otherwise.
    pub setting: String,
    pub metric: String,
    pub channel: String,
    pub reference: String,
    /// `None` when the run failed.
    pub value: Option<f64>,
}

impl MetricRow {
    pub fn group_key(&self) -> GroupKey {
        GroupKey {
            estimator: self.estimator.clone(),
            setting: self.setting.clone(),
            metric: self.metric.clone(),
            channel: self.channel.clone(),
            reference: self.reference.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct GroupKey {
    pub estimator: String,
    pub setting: String,
    pub metric: String,
    pub channel: String,
    pub reference: String,
}

/// Statistics over the successful runs of one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    #[serde(flatten)]
    pub key: GroupKey,
    pub runs: usize,
    pub failed: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

/// A run that did not produce a result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub seed: u64,
    pub estimator: String,
    pub setting: String,
    pub error: String,
}

/// A named pass/fail property of the results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Runtime {
    pub seed: u64,
    pub estimator: String,
    pub setting: String,
    pub seconds: f64,
}

/// An emitted file and the figure or table it stands in for.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmittedFile {
    pub path: PathBuf,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub name: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub metrics: Vec<MetricRow>,
    pub aggregates: Vec<Aggregate>,
    pub checks: Vec<Check>,
    pub failures: Vec<Failure>,
    /// Scalar results that are not per-run metrics.
    pub values: BTreeMap<String, f64>,
    #[serde(skip)]
    pub runtimes: Vec<Runtime>,
    #[serde(skip)]
    pub files: Vec<EmittedFile>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, name: &str, config_hash: &str, seeds: Vec<u64>) -> Self {
        Self {
            experiment: experiment.into(),
            name: name.into(),
            config_hash: config_hash.into(),
            seeds,
            metrics: Vec::new(),
            aggregates: Vec::new(),
            checks: Vec::new(),
            failures: Vec::new(),
            values: BTreeMap::new(),
            runtimes: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Recomputes the aggregates from the metric rows.
    pub fn aggregate(&mut self) {
        self.aggregates = aggregate(&self.metrics);
    }

    pub fn find_aggregate(&self, estimator: &str, setting: &str, metric: &str, channel: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| {
            a.key.estimator == estimator
                && a.key.setting == setting
                && a.key.metric == metric
                && a.key.channel == channel
        })
    }

    pub fn median(&self, estimator: &str, setting: &str, metric: &str, channel: &str) -> Option<f64> {
        self.find_aggregate(estimator, setting, metric, channel)
            .and_then(|a| a.median)
    }

    /// The value of one metric for one seed.
    pub fn value_for(&self, seed: u64, estimator: &str, setting: &str, metric: &str, channel: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| {
                m.seed == seed
                    && m.estimator == estimator
                    && m.setting == setting
                    && m.metric == metric
                    && m.channel == channel
            })
            .and_then(|m| m.value)
    }

    /// Values of one metric across seeds, in seed order.
    pub fn values_of(&self, estimator: &str, setting: &str, metric: &str, channel: &str) -> Vec<Option<f64>> {
        self.metrics
            .iter()
            .filter(|m| m.estimator == estimator && m.setting == setting && m.metric == metric && m.channel == channel)
            .map(|m| m.value)
            .collect()
    }
}

/// Groups rows by everything but the seed, in first-appearance order.
pub fn aggregate(rows: &[MetricRow]) -> Vec<Aggregate> {
    let mut order: Vec<GroupKey> = Vec::new();
    let mut groups: BTreeMap<GroupKey, (Vec<f64>, usize)> = BTreeMap::new();
    for r in rows {
        let key = r.group_key();
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (Vec::new(), 0)
        });
        match r.value {
            Some(v) => entry.0.push(v),
            None => entry.1 += 1,
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (values, failed) = &groups[&key];
            let s = Summary::of(values);
            Aggregate {
                key,
                runs: values.len(),
                failed: *failed,
                median: s.map(|s| s.median),
                q1: s.map(|s| s.q1),
                q3: s.map(|s| s.q3),
                mean: s.map(|s| s.mean),
                std: s.map(|s| s.std),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Collects the files of one experiment under its output directory.
pub struct Emitter {
    root: PathBuf,
    files: Vec<EmittedFile>,
}

impl Emitter {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes a CSV at `relative` with a header row.
    pub fn csv(&mut self, relative: &str, content: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.files.push(EmittedFile {
            path: relative.into(),
            content: content.into(),
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, relative: &str, content: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(self.root.join(relative), text + "\n")?;
        self.files.push(EmittedFile {
            path: relative.into(),
            content: content.into(),
        });
        Ok(())
    }

    pub fn into_files(self) -> Vec<EmittedFile> {
        self.files
    }
}

/// Writes the per-run metrics and the aggregates shared by every family.
pub fn write_common(emitter: &mut Emitter, report: &ExperimentReport) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .metrics
        .iter()
        .map(|m| {
            vec![
                report.config_hash.clone(),
                m.seed.to_string(),
                m.estimator.clone(),
                m.setting.clone(),
                m.metric.clone(),
                m.channel.clone(),
                m.reference.clone(),
                opt(m.value),
                if m.value.is_some() { "ok" } else { "failed" }.into(),
            ]
        })
        .collect();
    emitter.csv(
        "metrics.csv",
        "per-run metrics",
        &[
            "config_hash",
            "seed",
            "estimator",
            "setting",
            "metric",
            "channel",
            "reference",
            "value",
            "status",
        ],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = report
        .aggregates
        .iter()
        .map(|a| {
            vec![
                report.config_hash.clone(),
                a.key.estimator.clone(),
                a.key.setting.clone(),
                a.key.metric.clone(),
                a.key.channel.clone(),
                a.key.reference.clone(),
                a.runs.to_string(),
                a.failed.to_string(),
                opt(a.median),
                opt(a.q1),
                opt(a.q3),
                opt(a.q3.zip(a.q1).map(|(h, l)| h - l)),
                opt(a.mean),
                opt(a.std),
            ]
        })
        .collect();
    emitter.csv(
        "aggregates.csv",
        "median, quartiles, mean and std per group over successful runs",
        &[
            "config_hash",
            "estimator",
            "setting",
            "metric",
            "channel",
            "reference",
            "runs",
            "failed",
            "median",
            "q1",
            "q3",
            "iqr",
            "mean",
            "std",
        ],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = report
        .failures
        .iter()
        .map(|f| {
            vec![
                report.config_hash.clone(),
                f.seed.to_string(),
                f.estimator.clone(),
                f.setting.clone(),
                f.error.clone(),
            ]
        })
        .collect();
    emitter.csv(
        "failures.csv",
        "runs excluded from the aggregates",
        &["config_hash", "seed", "estimator", "setting", "error"],
        &rows,
    )?;
    emitter.json("report.json", "aggregates, checks and failures", report)?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    harness_version: &'a str,
    experiment: &'a str,
    name: &'a str,
    config_hash: &'a str,
    created_unix: u64,
    files: &'a [EmittedFile],
    runtimes: &'a [Runtime],
}

/// `manifest.json`: every emitted file with its content, plus timestamps
/// and runtimes, which are the only nondeterministic outputs.
pub fn write_manifest(root: &Path, report: &ExperimentReport) -> Result<PathBuf> {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = Manifest {
        harness_version: env!("CARGO_PKG_VERSION"),
        experiment: &report.experiment,
        name: &report.name,
        config_hash: &report.config_hash,
        created_unix: created,
        files: &report.files,
        runtimes: &report.runtimes,
    };
    let path = root.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, est: &str, v: Option<f64>) -> MetricRow {
        MetricRow {
            seed,
            estimator: est.into(),
            setting: String::new(),
            metric: "sse".into(),
            channel: "total".into(),
            reference: "truth".into(),
            value: v,
        }
    }

    #[test]
    fn failed_rows_are_counted_not_aggregated() {
        let rows = vec![
            row(1, "A", Some(1.0)),
            row(2, "A", None),
            row(3, "A", Some(3.0)),
            row(1, "B", Some(5.0)),
        ];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].key.estimator, "A");
        assert_eq!((agg[0].runs, agg[0].failed), (2, 1));
        assert_eq!(agg[0].median, Some(2.0));
        assert_eq!(agg[1].median, Some(5.0));
    }

    #[test]
    fn float_text_round_trips() {
        for x in [0.0, 1.5, -2e-9, 123456789.0, 1e-300, 0.1 + 0.2] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(2.5e-7), "2.5e-7");
    }
}
