use std::path::Path;

use dem_core::noise::{autocorrelation, gaussian_fit, histogram, smoothed_autocorrelation, GaussianFit};
use dem_core::systems::{residual_process_noise, ExperimentData};

use super::{collect, finish, new_report, per_seed, Cell};
use crate::config::{ExperimentConfig, ExperimentSpec, NoiseCase};
use crate::data::{self, SyntheticSpec};
use crate::error::{FieldError, HarnessError, Result};
use crate::report::{fmt_f64, Emitter, ExperimentReport};
use crate::stats::{median, std_dev};

pub const STD_COLUMNS: [&str; 4] = ["phi", "phidot", "w_phi", "w_phidot"];
const NOISE_CHANNELS: [&str; 2] = ["w_phi", "w_phidot"];
/// White-noise autocorrelation floor in units of `1/√N`.
pub const ACF_FLOOR_SIGMAS: f64 = 4.0;

#[derive(Default)]
struct Tables {
    fits: Vec<Vec<String>>,
    hist: Vec<Vec<String>>,
    acf: Vec<Vec<String>>,
    /// `(label, max |acf| beyond lag 0, floor)` per case.
    white: Vec<(String, f64, f64)>,
    /// `(label, channel, ks, critical)`.
    ks: Vec<(String, String, f64, f64)>,
}

struct Case {
    label: String,
    sigma: f64,
    /// `None` for a log.
    spec: Option<SyntheticSpec>,
}

fn cases(cfg: &ExperimentConfig, configured: &[NoiseCase]) -> Vec<Case> {
    match SyntheticSpec::from_config(cfg) {
        Some(base) => configured
            .iter()
            .map(|c| {
                let mut spec = base.clone();
                spec.process_covariance = c.process.covariance().expect("validated covariance");
                if let Some(s) = c.sigma {
                    spec.sigma = s;
                }
                Case {
                    label: c.label.clone(),
                    sigma: spec.sigma,
                    spec: Some(spec),
                }
            })
            .collect(),
        None => vec![Case {
            label: "log".into(),
            sigma: cfg.noise.sigma,
            spec: None,
        }],
    }
}

fn column(m: &nalgebra::DMatrix<f64>, c: usize) -> Vec<f64> {
    m.column(c).iter().copied().collect()
}

/// Sample count corrected for serial correlation, `N / (1 + 2 Σ ρ_h)`,
/// summing lags until the first non-positive autocorrelation.
pub fn effective_samples(n: usize, acf: &[f64]) -> usize {
    let tail: f64 = acf.iter().skip(1).take_while(|r| **r > 0.0).sum();
    let n_eff = n as f64 / (1.0 + 2.0 * tail);
    (n_eff.floor() as usize).clamp(1, n)
}

#[allow(clippy::too_many_arguments)]
fn characterize(
    cfg: &ExperimentConfig,
    case: &Case,
    data: &ExperimentData<f64>,
    bins: usize,
    max_lag: Option<usize>,
    hash: &str,
    cell: &mut Cell<Tables>,
) -> Result<()> {
    let seed = cell.seed;
    let model = cfg.model()?;
    let w = residual_process_noise(&model, data)?;
    let (_, states) = data::reference_states(data).ok_or(dem_core::Error::MissingStates("no state series"))?;
    let lag_default = ((6.0 * case.sigma / data.dt).ceil() as usize).max(10);
    let lags = max_lag.unwrap_or(lag_default).min(w.nrows().saturating_sub(1));
    let floor = ACF_FLOOR_SIGMAS / (w.nrows() as f64).sqrt();
    let mut worst_white = 0.0f64;

    for (c, name) in ["phi", "phidot"].iter().enumerate() {
        let v = std_dev(&column(states, c));
        cell.push("residual", &case.label, "std", name, "states", v);
    }
    for (c, name) in NOISE_CHANNELS.iter().enumerate() {
        let series = column(&w, c);
        cell.push("residual", &case.label, "std", name, "process_noise", std_dev(&series));
        let fit: GaussianFit = gaussian_fit(&series)?;
        let acf = autocorrelation(&series, lags)?;
        let n_eff = effective_samples(series.len(), &acf);
        let critical = GaussianFit::ks_critical_01(n_eff);
        cell.push("residual", &case.label, "ks", name, "gaussian", Some(fit.ks_statistic));
        cell.extra
            .ks
            .push((case.label.clone(), name.to_string(), fit.ks_statistic, critical));
        cell.extra.fits.push(vec![
            hash.into(),
            case.label.clone(),
            seed.to_string(),
            name.to_string(),
            fmt_f64(fit.mean),
            fmt_f64(fit.std),
            fmt_f64(fit.ks_statistic),
            n_eff.to_string(),
            fmt_f64(critical),
            (fit.ks_statistic <= critical).to_string(),
        ]);
        let (centers, counts) = histogram(&series, bins);
        let width = if centers.len() > 1 {
            centers[1] - centers[0]
        } else {
            1.0
        };
        let n = series.len() as f64;
        for (x, k) in centers.iter().zip(&counts) {
            let z = (x - fit.mean) / fit.std;
            let pdf = (-0.5 * z * z).exp() / (fit.std * std::f64::consts::TAU.sqrt());
            cell.extra.hist.push(vec![
                hash.into(),
                case.label.clone(),
                seed.to_string(),
                name.to_string(),
                fmt_f64(*x),
                k.to_string(),
                fmt_f64(*k as f64 / (n * width)),
                fmt_f64(pdf),
            ]);
        }
        for (h, r) in acf.iter().enumerate() {
            let tau = h as f64 * data.dt;
            if h > 0 {
                worst_white = worst_white.max(r.abs());
            }
            cell.extra.acf.push(vec![
                hash.into(),
                case.label.clone(),
                seed.to_string(),
                name.to_string(),
                h.to_string(),
                fmt_f64(tau),
                fmt_f64(*r),
                fmt_f64(smoothed_autocorrelation(case.sigma, tau)),
            ]);
        }
    }
    if case.sigma < data.dt {
        cell.extra.white.push((case.label.clone(), worst_white, floor));
    }
    Ok(())
}

/// Residual process-noise statistics per noise regime: standard
/// deviations, Gaussian fits with KS distance, histograms and
/// autocorrelation against the kernel's.
pub fn run_noise_characterization(cfg: &ExperimentConfig, root: &Path) -> Result<ExperimentReport> {
    let ExperimentSpec::NoiseCharacterization {
        cases: configured,
        bins,
        max_lag,
    } = &cfg.experiment
    else {
        return Err(HarnessError::Invalid(vec![FieldError::new(
            "experiment.kind",
            "expected noise_characterization",
        )]));
    };
    let cases = cases(cfg, configured);
    let mut report = new_report(cfg);
    let hash = report.config_hash.clone();
    let cells = per_seed::<Tables>(&cfg.run_seeds(), |cell| {
        let seed = cell.seed;
        for case in &cases {
            let part = cell.attempt("residual", &case.label, || {
                let data = match &case.spec {
                    Some(spec) => data::synthesize(cfg, spec, seed)?,
                    None => data::load(cfg, seed)?,
                };
                let mut part = Cell::<Tables>::new(seed);
                characterize(cfg, case, &data, *bins, *max_lag, &hash, &mut part)?;
                Ok(part)
            });
            match part {
                Some(p) => {
                    cell.rows.extend(p.rows);
                    let t = &mut cell.extra;
                    t.fits.extend(p.extra.fits);
                    t.hist.extend(p.extra.hist);
                    t.acf.extend(p.extra.acf);
                    t.white.extend(p.extra.white);
                    t.ks.extend(p.extra.ks);
                }
                None => {
                    for col in STD_COLUMNS {
                        cell.push("residual", &case.label, "std", col, "", None);
                    }
                }
            }
        }
    });
    let extras = collect(&mut report, cells);

    let mut std_rows = Vec::new();
    for case in &cases {
        let mut row = vec![report.config_hash.clone(), case.label.clone()];
        for col in STD_COLUMNS {
            let vals: Vec<f64> = report
                .values_of("residual", &case.label, "std", col)
                .into_iter()
                .flatten()
                .collect();
            row.push(median(&vals).map(fmt_f64).unwrap_or_default());
        }
        std_rows.push(row);

        let ks: Vec<_> = extras
            .iter()
            .flat_map(|(_, t)| t.ks.iter())
            .filter(|(l, ..)| *l == case.label)
            .collect();
        let worst = ks.iter().map(|(_, _, k, c)| k / c).fold(0.0, f64::max);
        report.check(
            &format!("gaussian[{}]", case.label),
            !ks.is_empty() && worst <= 1.0,
            format!("largest KS statistic over its 0.01 critical value: {}", fmt_f64(worst)),
        );
        let white: Vec<_> = extras
            .iter()
            .flat_map(|(_, t)| t.white.iter())
            .filter(|(l, ..)| *l == case.label)
            .collect();
        if !white.is_empty() {
            let pass = white.iter().all(|(_, a, f)| a <= f);
            let worst = white.iter().map(|(_, a, _)| *a).fold(0.0, f64::max);
            report.check(
                &format!("white_autocorrelation[{}]", case.label),
                pass,
                format!(
                    "largest |acf| beyond lag 0: {} (floor {} / sqrt(N))",
                    fmt_f64(worst),
                    ACF_FLOOR_SIGMAS
                ),
            );
        }
    }

    let mut em = Emitter::new(root)?;
    em.csv(
        "std_table.csv",
        "median standard deviation of states and residual process noise per regime",
        &["config_hash", "case", "phi", "phidot", "w_phi", "w_phidot"],
        &std_rows,
    )?;
    let gather = |f: fn(&Tables) -> &Vec<Vec<String>>| -> Vec<Vec<String>> {
        extras.iter().flat_map(|(_, t)| f(t).iter().cloned()).collect()
    };
    em.csv(
        "gaussian_fit.csv",
        "Gaussian fit and KS statistic of the residual process noise, critical value at the effective sample size",
        &[
            "config_hash",
            "case",
            "seed",
            "channel",
            "mean",
            "std",
            "ks",
            "effective_samples",
            "ks_critical_01",
            "gaussian",
        ],
        &gather(|t| &t.fits),
    )?;
    em.csv(
        "histogram.csv",
        "histogram of the residual process noise with the fitted density",
        &[
            "config_hash",
            "case",
            "seed",
            "channel",
            "bin_center",
            "count",
            "density",
            "fit_density",
        ],
        &gather(|t| &t.hist),
    )?;
    em.csv(
        "autocorrelation.csv",
        "sample autocorrelation of the residual process noise and the kernel's",
        &[
            "config_hash",
            "case",
            "seed",
            "channel",
            "lag",
            "lag_seconds",
            "acf",
            "kernel_acf",
        ],
        &gather(|t| &t.acf),
    )?;
    finish(em, report)
}
