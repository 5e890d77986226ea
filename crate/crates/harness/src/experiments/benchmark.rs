use std::path::Path;

use dem_core::benchmarks::{fit_ar, kalman_filter_lti, skip_samples, smikf, state_augmentation_filter};
use dem_core::dem::run_observer;
use dem_core::systems::{residual_process_noise, ExperimentData, LtiModel};
use dem_core::ArModel;
use nalgebra::{DMatrix, DVector};

use super::{bar_rows, collect, finish, new_report, per_seed, seed_table, Cell, BAR_HEADER, STATE_CHANNELS};
use crate::config::{ExperimentConfig, ExperimentSpec, STATE_DIM};
use crate::data;
use crate::error::{HarnessError, Result};
use crate::report::{fmt_f64, Emitter, ExperimentReport};

pub const ESTIMATORS: [&str; 4] = ["DEM", "KF", "SA", "SMIKF"];
const METRIC: &str = "state_sse";

/// Kalman filter setup shared by KF, SA and SMIKF: zero initial state,
/// unit initial covariance and the plant's noise levels.
pub(crate) struct FilterSetup {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub p0: DMatrix<f64>,
}

impl FilterSetup {
    pub fn new(cfg: &ExperimentConfig, model: &LtiModel<f64>, dt: f64) -> Self {
        Self {
            q: cfg.process_covariance() * (dt * dt),
            r: cfg.output_measurement_covariance(model),
            x0: DVector::zeros(STATE_DIM),
            p0: DMatrix::identity(STATE_DIM, STATE_DIM),
        }
    }
}

/// AR models of each residual process-noise channel.
pub(crate) fn fit_noise(model: &LtiModel<f64>, data: &ExperimentData<f64>, order: usize) -> Result<Vec<ArModel<f64>>> {
    let w = residual_process_noise(model, data)?;
    (0..w.ncols())
        .map(|c| Ok(fit_ar(&w.column(c).iter().copied().collect::<Vec<_>>(), order)?))
        .collect()
}

/// Whether the plant noise is effectively white at the sample interval.
pub fn is_white_regime(cfg: &ExperimentConfig, dt: f64) -> bool {
    cfg.noise.sigma < dt
}

fn estimate_all(cfg: &ExperimentConfig, ar_order: usize, cell: &mut Cell<()>) {
    let seed = cell.seed;
    let prepared = cell.attempt("data", "", || {
        let data = data::load(cfg, seed)?;
        let (label, reference) =
            data::reference_states(&data)
                .map(|(l, r)| (l, r.clone()))
                .ok_or(dem_core::Error::MissingStates(
                    "no reference states for the error metric",
                ))?;
        Ok((data, label, reference, cfg.model()?))
    });
    let Some((data, label, reference, model)) = prepared else {
        for e in ESTIMATORS {
            cell.push(e, "", METRIC, "total", "", None);
        }
        return;
    };
    let skip = skip_samples(cfg.transient_skip, data.dt);
    let setup = FilterSetup::new(cfg, &model, data.dt);

    let dem = cell.attempt("DEM", "", || {
        let dcfg = cfg.dem_config(&model, cfg.dem.p, cfg.dem.d, data.dt)?;
        Ok(run_observer(&model, &dcfg, &data, true)?.states())
    });
    let kf = cell.attempt("KF", "", || {
        Ok(kalman_filter_lti(&model, &data, &setup.q, &setup.r, &setup.x0, &setup.p0)?.means)
    });
    let sa = cell.attempt("SA", "", || {
        let ar = fit_noise(&model, &data, ar_order)?;
        Ok(state_augmentation_filter(&model, &ar, &data, &setup.r, &setup.x0, &setup.p0)?.means)
    });
    let sm = cell.attempt("SMIKF", "", || {
        let ar = fit_noise(&model, &data, 1)?;
        let a: Vec<f64> = ar.iter().map(|m| m.coefficients[0]).collect();
        let var: Vec<f64> = ar.iter().map(|m| m.innovation_variance).collect();
        Ok(smikf(&model, &a, &var, &data, &setup.r, &setup.x0, &setup.p0)?.means)
    });
    for (name, est) in ESTIMATORS.iter().zip([dem, kf, sa, sm]) {
        cell.push_sse(name, "", METRIC, &STATE_CHANNELS, label, est.as_ref(), &reference, skip);
    }
}

/// Per-seed state SSE of DEM (known inputs), KF, SA and SMIKF.
pub fn run_benchmark_state(cfg: &ExperimentConfig, root: &Path) -> Result<ExperimentReport> {
    let ExperimentSpec::BenchmarkState { ar_order } = cfg.experiment else {
        return Err(HarnessError::Invalid(vec![crate::error::FieldError::new(
            "experiment.kind",
            "expected benchmark_state",
        )]));
    };
    let mut report = new_report(cfg);
    let seeds = cfg.run_seeds();
    let cells = per_seed(&seeds, |cell| estimate_all(cfg, ar_order, cell));
    collect(&mut report, cells);

    let med = |e: &str| report.median(e, "", METRIC, "total");
    let medians: Vec<Option<f64>> = ESTIMATORS.iter().map(|e| med(e)).collect();
    let dt = cfg.synthetic_dt().unwrap_or(f64::NAN);
    let white = is_white_regime(cfg, dt);
    if let [Some(dem), Some(kf), Some(sa), Some(sm)] = medians[..] {
        let dem_best = dem < kf && dem < sa && dem < sm;
        let sa_next = sa < kf && sa < sm;
        let kf_ok = kf <= dem;
        let summary = format!(
            "median state SSE: DEM {} KF {} SA {} SMIKF {}",
            fmt_f64(dem),
            fmt_f64(kf),
            fmt_f64(sa),
            fmt_f64(sm)
        );
        if white {
            report.check("kf_not_worse_than_dem", kf_ok, summary.clone());
        } else {
            report.check("dem_strictly_smallest", dem_best, summary.clone());
            report.check("sa_below_kf_and_smikf", sa_next, summary.clone());
        }
        let (regime, expected) = if white { ("white", kf_ok) } else { ("colored", dem_best) };
        report.check("expected_regime", expected, format!("{regime} noise regime; {summary}"));
        for (name, m) in ESTIMATORS.iter().zip([dem, kf, sa, sm]) {
            report.values.insert(format!("median_state_sse_{name}"), m);
        }
    } else {
        report.check("expected_regime", false, "an estimator has no successful runs");
    }
    report
        .values
        .insert("white_regime".into(), if white { 1.0 } else { 0.0 });

    let mut em = Emitter::new(root)?;
    let per_seed_rows = seed_table(&report, &seeds, &ESTIMATORS, METRIC);
    let mut header = vec!["config_hash", "seed"];
    header.extend(ESTIMATORS);
    em.csv(
        "state_sse_per_seed.csv",
        "state SSE per seed and estimator",
        &header,
        &per_seed_rows,
    )?;
    let bars = bar_rows(&report, &ESTIMATORS, METRIC);
    em.csv(
        "state_sse_bars.csv",
        "median state SSE per estimator with quartiles (bar chart)",
        &BAR_HEADER,
        &bars,
    )?;
    finish(em, report)
}
