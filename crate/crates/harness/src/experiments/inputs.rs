use std::path::Path;

use dem_core::benchmarks::{design_uio, skip_samples, uio, UioConfig};
use dem_core::dem::run_observer;

use super::{bar_rows, collect, finish, new_report, per_seed, seed_table, BAR_HEADER, INPUT_CHANNELS, STATE_CHANNELS};
use crate::config::{ExperimentConfig, ExperimentSpec};
use crate::data;
use crate::error::{FieldError, HarnessError, Result};
use crate::report::{fmt_f64, Emitter, ExperimentReport};

pub const ESTIMATORS: [&str; 2] = ["DEM", "UIO"];
const METRIC: &str = "input_sse";
/// Clean-data input SSE bound for both estimators.
pub const CLEAN_INPUT_SSE: f64 = 1e-3;
/// Largest accepted ratio between the two median input SSEs.
pub const PARITY_FACTOR: f64 = 2.0;

#[derive(Default)]
struct Traces(Vec<Vec<String>>);

/// Input estimation by DEM (with its input prior) and by the unknown
/// input observer. The observer design is checked before any run.
pub fn run_input_benchmark(cfg: &ExperimentConfig, root: &Path) -> Result<ExperimentReport> {
    let ExperimentSpec::InputBenchmark {
        uio_pole,
        uio_derivative_order,
    } = cfg.experiment
    else {
        return Err(HarnessError::Invalid(vec![FieldError::new(
            "experiment.kind",
            "expected input_benchmark",
        )]));
    };
    let model = cfg.model()?;
    design_uio(&model, uio_pole)?;
    let uio_cfg = UioConfig {
        pole: uio_pole,
        derivative_order: uio_derivative_order,
    };
    let mut report = new_report(cfg);
    let hash = report.config_hash.clone();
    let seeds = cfg.run_seeds();
    let trace_seed = seeds[0];
    let cells = per_seed::<Traces>(&seeds, |cell| {
        let seed = cell.seed;
        let Some(data) = cell.attempt("data", "", || data::load(cfg, seed)) else {
            for e in ESTIMATORS {
                cell.push(e, "", METRIC, "total", "", None);
            }
            return;
        };
        let skip = skip_samples(cfg.transient_skip, data.dt);
        let dem = cell.attempt("DEM", "", || {
            let dcfg = cfg.dem_config(&model, cfg.dem.p, cfg.dem.d, data.dt)?;
            let run = run_observer(&model, &dcfg, &data, false)?;
            Ok((run.states(), run.inputs()))
        });
        let uo = cell.attempt("UIO", "", || {
            let out = uio(&model, &data, &uio_cfg)?;
            Ok((out.states, out.inputs))
        });
        let (in_label, in_ref) = data::reference_inputs(&data);
        let in_ref = in_ref.clone();
        for (name, est) in ESTIMATORS.iter().zip([&dem, &uo]) {
            let inputs = est.as_ref().map(|(_, v)| v);
            cell.push_sse(name, "", METRIC, &INPUT_CHANNELS, in_label, inputs, &in_ref, skip);
            if let Some((label, x_ref)) = data::reference_states(&data) {
                let states = est.as_ref().map(|(x, _)| x);
                cell.push_sse(name, "", "state_sse", &STATE_CHANNELS, label, states, x_ref, skip);
            }
        }
        if seed == trace_seed {
            for k in 0..data.len() {
                for (c, ch) in INPUT_CHANNELS.iter().enumerate() {
                    let pick = |e: &Option<(_, nalgebra::DMatrix<f64>)>| {
                        e.as_ref().map(|(_, v)| fmt_f64(v[(k, c)])).unwrap_or_default()
                    };
                    cell.extra.0.push(vec![
                        hash.clone(),
                        seed.to_string(),
                        k.to_string(),
                        fmt_f64(k as f64 * data.dt),
                        ch.to_string(),
                        fmt_f64(in_ref[(k, c)]),
                        pick(&dem),
                        pick(&uo),
                    ]);
                }
            }
        }
    });
    let extras = collect(&mut report, cells);

    let dem = report.median("DEM", "", METRIC, "total");
    let uo = report.median("UIO", "", METRIC, "total");
    if let (Some(d), Some(u)) = (dem, uo) {
        let ratio = d.max(u) / d.min(u);
        report.values.insert("median_input_sse_ratio".into(), ratio);
        let detail = format!("median input SSE: DEM {} UIO {}", fmt_f64(d), fmt_f64(u));
        if cfg.is_noiseless() {
            report.check(
                "both_below_clean_bound",
                d < CLEAN_INPUT_SSE && u < CLEAN_INPUT_SSE,
                detail,
            );
        } else {
            report.check("within_factor_2", ratio <= PARITY_FACTOR, detail);
        }
    } else {
        let name = if cfg.is_noiseless() {
            "both_below_clean_bound"
        } else {
            "within_factor_2"
        };
        report.check(name, false, "an estimator has no successful runs");
    }

    let mut em = Emitter::new(root)?;
    let traces: Vec<Vec<String>> = extras.into_iter().flat_map(|(_, t)| t.0).collect();
    em.csv(
        "input_traces.csv",
        "estimated and reference inputs over time for the first seed",
        &[
            "config_hash",
            "seed",
            "sample",
            "t",
            "channel",
            "reference",
            "DEM",
            "UIO",
        ],
        &traces,
    )?;
    let bars = bar_rows(&report, &ESTIMATORS, METRIC);
    em.csv(
        "input_sse_bars.csv",
        "median input SSE per estimator with quartiles (bar chart)",
        &BAR_HEADER,
        &bars,
    )?;
    let per_seed_rows = seed_table(&report, &seeds, &ESTIMATORS, METRIC);
    em.csv(
        "input_sse_per_seed.csv",
        "input SSE per seed and estimator",
        &["config_hash", "seed", "DEM", "UIO"],
        &per_seed_rows,
    )?;
    finish(em, report)
}
