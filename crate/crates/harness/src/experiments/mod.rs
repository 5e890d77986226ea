//! The experiment families. Each `run_*` computes its report and writes
//! its CSVs under the config's output directory.

mod benchmark;
mod inputs;
mod landscape;
mod noise;
mod prior;
mod sweep;

use std::path::Path;
use std::time::Instant;

use dem_core::benchmarks::sse;
use nalgebra::DMatrix;
use rayon::prelude::*;

pub use benchmark::run_benchmark_state;
pub use inputs::run_input_benchmark;
pub use landscape::run_landscape;
pub use noise::run_noise_characterization;
pub use prior::run_prior_sweep;
pub use sweep::run_sweep_p;

use crate::config::{ExperimentConfig, ExperimentSpec};
use crate::error::Result;
use crate::report::{fmt_f64, write_common, write_manifest, Emitter, ExperimentReport, Failure, MetricRow, Runtime};

pub const STATE_CHANNELS: [&str; 2] = ["phi", "phidot"];
pub const INPUT_CHANNELS: [&str; 4] = ["pwm1", "pwm2", "pwm3", "pwm4"];

/// Runs the family named by the config, writing artifacts under
/// `output` (the config's own directory when `None`).
pub fn run(cfg: &ExperimentConfig, output: Option<&Path>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let root = output.unwrap_or(&cfg.output_dir);
    match cfg.experiment {
        ExperimentSpec::BenchmarkState { .. } => run_benchmark_state(cfg, root),
        ExperimentSpec::SweepP { .. } => run_sweep_p(cfg, root),
        ExperimentSpec::Landscape { .. } => run_landscape(cfg, root),
        ExperimentSpec::InputBenchmark { .. } => run_input_benchmark(cfg, root),
        ExperimentSpec::PriorSweep { .. } => run_prior_sweep(cfg, root),
        ExperimentSpec::NoiseCharacterization { .. } => run_noise_characterization(cfg, root),
    }
}

/// Everything one seed contributed.
pub(crate) struct Cell<X> {
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    pub failures: Vec<Failure>,
    pub runtimes: Vec<Runtime>,
    pub extra: X,
}

impl<X: Default> Cell<X> {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rows: Vec::new(),
            failures: Vec::new(),
            runtimes: Vec::new(),
            extra: X::default(),
        }
    }
}

impl<X> Cell<X> {
    /// Times `f` and records a failure when it errs.
    pub fn attempt<R>(&mut self, estimator: &str, setting: &str, f: impl FnOnce() -> Result<R>) -> Option<R> {
        let start = Instant::now();
        let out = f();
        self.runtimes.push(Runtime {
            seed: self.seed,
            estimator: estimator.into(),
            setting: setting.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        match out {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("seed {} {estimator} {setting}: {e}", self.seed);
                self.failures.push(Failure {
                    seed: self.seed,
                    estimator: estimator.into(),
                    setting: setting.into(),
                    error: e.to_string(),
                });
                None
            }
        }
    }

    pub fn push(
        &mut self,
        estimator: &str,
        setting: &str,
        metric: &str,
        channel: &str,
        reference: &str,
        value: Option<f64>,
    ) {
        self.rows.push(MetricRow {
            seed: self.seed,
            estimator: estimator.into(),
            setting: setting.into(),
            metric: metric.into(),
            channel: channel.into(),
            reference: reference.into(),
            value,
        });
    }

    /// Per-channel and total SSE of `estimate` against `reference` after
    /// `skip` samples; every value is `None` when the estimate is missing.
    #[allow(clippy::too_many_arguments)]
    pub fn push_sse(
        &mut self,
        estimator: &str,
        setting: &str,
        metric: &str,
        channels: &[&str],
        reference_label: &str,
        estimate: Option<&DMatrix<f64>>,
        reference: &DMatrix<f64>,
        skip: usize,
    ) {
        let per: Vec<Option<f64>> = (0..channels.len())
            .map(|c| estimate.and_then(|e| column_sse(e, reference, c, skip)))
            .collect();
        let total = per.iter().copied().sum::<Option<f64>>();
        for (c, v) in channels.iter().zip(&per) {
            self.push(estimator, setting, metric, c, reference_label, *v);
        }
        self.push(estimator, setting, metric, "total", reference_label, total);
    }
}

pub(crate) fn column_sse(est: &DMatrix<f64>, reference: &DMatrix<f64>, channel: usize, skip: usize) -> Option<f64> {
    let e: Vec<f64> = est.column(channel).iter().copied().collect();
    let r: Vec<f64> = reference.column(channel).iter().copied().collect();
    sse(&e, &r, skip).ok().filter(|v| v.is_finite())
}

/// Evaluates `f` for every seed in parallel, returning cells in seed order.
pub(crate) fn per_seed<X: Send + Default>(seeds: &[u64], f: impl Fn(&mut Cell<X>) + Sync) -> Vec<Cell<X>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut cell = Cell::new(seed);
            f(&mut cell);
            cell
        })
        .collect()
}

/// Moves the cells' rows into the report and recomputes aggregates.
pub(crate) fn collect<X>(report: &mut ExperimentReport, cells: Vec<Cell<X>>) -> Vec<(u64, X)> {
    let mut extras = Vec::with_capacity(cells.len());
    for c in cells {
        report.metrics.extend(c.rows);
        report.failures.extend(c.failures);
        report.runtimes.extend(c.runtimes);
        extras.push((c.seed, c.extra));
    }
    report.aggregate();
    extras
}

/// Writes the shared files and the manifest.
pub(crate) fn finish(mut emitter: Emitter, mut report: ExperimentReport) -> Result<ExperimentReport> {
    write_common(&mut emitter, &report)?;
    let root = emitter.root().to_path_buf();
    report.files = emitter.into_files();
    write_manifest(&root, &report)?;
    Ok(report)
}

pub(crate) fn new_report(cfg: &ExperimentConfig) -> ExperimentReport {
    ExperimentReport::new(cfg.kind(), &cfg.name, &cfg.hash(), cfg.run_seeds())
}

pub(crate) const BAR_HEADER: [&str; 7] = ["config_hash", "estimator", "runs", "failed", "median", "q1", "q3"];

/// Median and quartiles of the `total` channel of `metric` per estimator.
pub(crate) fn bar_rows(report: &ExperimentReport, estimators: &[&str], metric: &str) -> Vec<Vec<String>> {
    let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    estimators
        .iter()
        .filter_map(|e| report.find_aggregate(e, "", metric, "total"))
        .map(|a| {
            vec![
                report.config_hash.clone(),
                a.key.estimator.clone(),
                a.runs.to_string(),
                a.failed.to_string(),
                f(a.median),
                f(a.q1),
                f(a.q3),
            ]
        })
        .collect()
}

/// One row per seed with the `total` channel of `metric` per estimator.
pub(crate) fn seed_table(
    report: &ExperimentReport,
    seeds: &[u64],
    estimators: &[&str],
    metric: &str,
) -> Vec<Vec<String>> {
    seeds
        .iter()
        .map(|&s| {
            let mut row = vec![report.config_hash.clone(), s.to_string()];
            for e in estimators {
                row.push(
                    report
                        .value_for(s, e, "", metric, "total")
                        .map(fmt_f64)
                        .unwrap_or_default(),
                );
            }
            row
        })
        .collect()
}
