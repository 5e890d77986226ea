use std::path::Path;

use dem_core::benchmarks::skip_samples;
use dem_core::dem::run_observer;

use super::{collect, finish, new_report, per_seed, STATE_CHANNELS};
use crate::config::{ExperimentConfig, ExperimentSpec};
use crate::data;
use crate::error::{FieldError, HarnessError, Result};
use crate::report::{fmt_f64, Emitter, ExperimentReport};
use crate::stats::spearman;

const METRIC: &str = "state_sse";

pub fn setting(p: usize) -> String {
    format!("p={p}")
}

/// DEM state SSE for every embedding order `p`, with the input order
/// capped at `min(d, p)`.
pub fn run_sweep_p(cfg: &ExperimentConfig, root: &Path) -> Result<ExperimentReport> {
    let ExperimentSpec::SweepP { p_values, d } = &cfg.experiment else {
        return Err(HarnessError::Invalid(vec![FieldError::new(
            "experiment.kind",
            "expected sweep_p",
        )]));
    };
    let mut report = new_report(cfg);
    let cells = per_seed::<()>(&cfg.run_seeds(), |cell| {
        let seed = cell.seed;
        let prepared =
            cell.attempt("data", "", || {
                let data = data::load(cfg, seed)?;
                let (label, reference) = data::reference_states(&data).map(|(l, r)| (l, r.clone())).ok_or(
                    dem_core::Error::MissingStates("no reference states for the error metric"),
                )?;
                Ok((data, label, reference, cfg.model()?))
            });
        let Some((data, label, reference, model)) = prepared else {
            for &p in p_values {
                cell.push("DEM", &setting(p), METRIC, "total", "", None);
            }
            return;
        };
        let skip = skip_samples(cfg.transient_skip, data.dt);
        for &p in p_values {
            let s = setting(p);
            let est = cell.attempt("DEM", &s, || {
                let dcfg = cfg.dem_config(&model, p, (*d).min(p), data.dt)?;
                Ok(run_observer(&model, &dcfg, &data, true)?.states())
            });
            cell.push_sse(
                "DEM",
                &s,
                METRIC,
                &STATE_CHANNELS,
                label,
                est.as_ref(),
                &reference,
                skip,
            );
        }
    });
    collect(&mut report, cells);

    let mut rows = Vec::new();
    let mut ps = Vec::new();
    let mut medians = Vec::new();
    for &p in p_values {
        let Some(a) = report.find_aggregate("DEM", &setting(p), METRIC, "total") else {
            continue;
        };
        let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        rows.push(vec![
            report.config_hash.clone(),
            p.to_string(),
            (*d).min(p).to_string(),
            a.runs.to_string(),
            a.failed.to_string(),
            f(a.mean),
            f(a.std),
            f(a.median),
            f(a.q1),
            f(a.q3),
        ]);
        if let Some(m) = a.median {
            ps.push(p as f64);
            medians.push(m);
        }
    }
    let rho = spearman(&ps, &medians);
    report.check(
        "spearman_negative",
        rho.is_some_and(|r| r < 0.0),
        format!(
            "Spearman(p, median SSE) = {}",
            rho.map(fmt_f64).unwrap_or("undefined".into())
        ),
    );
    if let Some(r) = rho {
        report.values.insert("spearman_p_median_sse".into(), r);
    }
    let lo = p_values.iter().min().copied();
    let hi = p_values.iter().max().copied();
    if let (Some(lo), Some(hi)) = (lo, hi) {
        let m = |p| report.median("DEM", &setting(p), METRIC, "total");
        if let (Some(a), Some(b)) = (m(lo), m(hi)) {
            report.values.insert("median_sse_ratio_high_over_low_p".into(), b / a);
            report.check(
                "highest_p_halves_sse",
                b < a / 2.0,
                format!("median SSE p={hi}: {} vs p={lo}: {}", fmt_f64(b), fmt_f64(a)),
            );
        }
    }

    let mut em = Emitter::new(root)?;
    em.csv(
        "sweep_p_summary.csv",
        "mean and std of state SSE per embedding order (SSE vs p curve)",
        &[
            "config_hash",
            "p",
            "d",
            "runs",
            "failed",
            "mean",
            "std",
            "median",
            "q1",
            "q3",
        ],
        &rows,
    )?;
    finish(em, report)
}
