use std::path::Path;

use dem_core::benchmarks::skip_samples;
use dem_core::dem::run_observer;
use nalgebra::DMatrix;

use super::{collect, finish, new_report, per_seed, INPUT_CHANNELS};
use crate::config::{ExperimentConfig, ExperimentSpec, INPUT_DIM};
use crate::data;
use crate::error::{FieldError, HarnessError, Result};
use crate::report::{fmt_f64, Emitter, ExperimentReport};
use crate::stats::spearman;

const METRIC: &str = "input_sse";
const DEVIATION: &str = "prior_deviation";
/// Largest post-transient distance from the prior mean at which the
/// input estimate counts as pinned to it.
pub const PIN_TOLERANCE: f64 = 1e-2;

pub fn setting(pv: f64) -> String {
    format!("pv={}", fmt_f64(pv))
}

/// Traces of the first seed, one set per prior precision.
#[derive(Default)]
struct Traces(Vec<Vec<Vec<String>>>);

/// DEM state and input estimation for every input prior precision on the
/// grid, with the prior mean held fixed.
pub fn run_prior_sweep(cfg: &ExperimentConfig, root: &Path) -> Result<ExperimentReport> {
    let ExperimentSpec::PriorSweep { precisions } = &cfg.experiment else {
        return Err(HarnessError::Invalid(vec![FieldError::new(
            "experiment.kind",
            "expected prior_sweep",
        )]));
    };
    let mut report = new_report(cfg);
    let hash = report.config_hash.clone();
    let seeds = cfg.run_seeds();
    let trace_seed = seeds[0];
    let eta = cfg.prior_mean();
    let cells = per_seed::<Traces>(&seeds, |cell| {
        let seed = cell.seed;
        let prepared = cell.attempt("data", "", || Ok((data::load(cfg, seed)?, cfg.model()?)));
        let Some((data, model)) = prepared else {
            for &pv in precisions {
                cell.push("DEM", &setting(pv), METRIC, "total", "", None);
                cell.push("DEM", &setting(pv), DEVIATION, "max", "", None);
            }
            return;
        };
        let skip = skip_samples(cfg.transient_skip, data.dt);
        let (label, reference) = data::reference_inputs(&data);
        let reference = reference.clone();
        for &pv in precisions {
            let s = setting(pv);
            let est = cell.attempt("DEM", &s, || {
                let mut dcfg = cfg.dem_config(&model, cfg.dem.p, cfg.dem.d, data.dt)?;
                dcfg.noise = dcfg
                    .noise
                    .with_input_prior(DMatrix::identity(INPUT_DIM, INPUT_DIM) * pv)?;
                Ok(run_observer(&model, &dcfg, &data, false)?.inputs())
            });
            cell.push_sse(
                "DEM",
                &s,
                METRIC,
                &INPUT_CHANNELS,
                label,
                est.as_ref(),
                &reference,
                skip,
            );
            let deviation = est.as_ref().map(|v| {
                (skip..v.nrows())
                    .flat_map(|k| (0..INPUT_DIM).map(move |c| (k, c)))
                    .map(|(k, c)| (v[(k, c)] - eta[c]).abs())
                    .fold(0.0, f64::max)
            });
            cell.push("DEM", &s, DEVIATION, "max", "prior", deviation);
            if seed == trace_seed {
                let rows = (0..data.len())
                    .flat_map(|k| (0..INPUT_DIM).map(move |c| (k, c)))
                    .map(|(k, c)| {
                        vec![
                            hash.clone(),
                            seed.to_string(),
                            fmt_f64(pv),
                            k.to_string(),
                            fmt_f64(k as f64 * data.dt),
                            INPUT_CHANNELS[c].to_string(),
                            fmt_f64(reference[(k, c)]),
                            fmt_f64(eta[c]),
                            est.as_ref().map(|v| fmt_f64(v[(k, c)])).unwrap_or_default(),
                        ]
                    })
                    .collect();
                cell.extra.0.push(rows);
            }
        }
    });
    let extras = collect(&mut report, cells);

    let mut curve = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &pv in precisions {
        let s = setting(pv);
        let Some(a) = report.find_aggregate("DEM", &s, METRIC, "total") else {
            continue;
        };
        let dev = report.median("DEM", &s, DEVIATION, "max");
        let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        curve.push(vec![
            report.config_hash.clone(),
            fmt_f64(pv),
            a.runs.to_string(),
            a.failed.to_string(),
            f(a.median),
            f(a.q1),
            f(a.q3),
            f(a.mean),
            f(dev),
        ]);
        if let Some(m) = a.median {
            xs.push(pv);
            ys.push(m);
        }
    }
    let rho = spearman(&xs, &ys);
    report.check(
        "spearman_positive",
        rho.is_some_and(|r| r > 0.0),
        format!(
            "Spearman(P^v, median input SSE) = {}",
            rho.map(fmt_f64).unwrap_or("undefined".into())
        ),
    );
    if let Some(r) = rho {
        report.values.insert("spearman_pv_median_sse".into(), r);
    }
    if let Some(top) = precisions.iter().copied().reduce(f64::max) {
        let worst = report
            .values_of("DEM", &setting(top), DEVIATION, "max")
            .into_iter()
            .collect::<Option<Vec<f64>>>()
            .and_then(|v| v.into_iter().reduce(f64::max));
        if let Some(w) = worst {
            report.values.insert("max_prior_deviation_at_top_precision".into(), w);
        }
        report.check(
            "pinned_at_top_precision",
            worst.is_some_and(|w| w <= PIN_TOLERANCE),
            format!(
                "largest |v - eta| after the transient at P^v={}: {}",
                fmt_f64(top),
                worst.map(fmt_f64).unwrap_or("unavailable".into())
            ),
        );
    }

    let mut em = Emitter::new(root)?;
    em.csv(
        "prior_sweep_curve.csv",
        "input SSE against prior precision (accuracy-complexity curve)",
        &[
            "config_hash",
            "precision",
            "runs",
            "failed",
            "median",
            "q1",
            "q3",
            "mean",
            "median_prior_deviation",
        ],
        &curve,
    )?;
    let header = [
        "config_hash",
        "seed",
        "precision",
        "sample",
        "t",
        "channel",
        "reference",
        "prior",
        "estimate",
    ];
    for (_, traces) in extras {
        for (i, rows) in traces.0.iter().enumerate() {
            em.csv(
                &format!("prior_traces/trace_{i:02}.csv"),
                &format!("input estimate over time at P^v = {}", fmt_f64(precisions[i])),
                &header,
                rows,
            )?;
        }
    }
    finish(em, report)
}
