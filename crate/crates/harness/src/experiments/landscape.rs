use std::path::Path;

use dem_core::benchmarks::skip_samples;
use dem_core::dem::{assemble_observer, free_energy_landscape, random_directions, run_with_matrices, LANDSCAPE_SLACK};

use super::{collect, finish, new_report, per_seed};
use crate::config::{ExperimentConfig, ExperimentSpec, STATE_DIM};
use crate::data::{self, derive_seed, Stream};
use crate::error::{FieldError, HarnessError, Result};
use crate::report::{fmt_f64, Emitter, ExperimentReport};

#[derive(Default)]
struct Surfaces {
    probes: Vec<Vec<String>>,
    grid: Vec<Vec<String>>,
    summary: Vec<Vec<String>>,
    /// Probe deltas at zero magnitude.
    zero_deltas: Vec<f64>,
}

/// `count` sample indices spread evenly over `[skip, len)`.
pub fn sample_indices(len: usize, skip: usize, count: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let start = skip.min(len - 1);
    let span = len - 1 - start;
    if count == 1 {
        return vec![len - 1];
    }
    (0..count).map(|j| start + j * span / (count - 1)).collect()
}

/// Free energy around the DEM estimate at evenly spaced sample times,
/// probed along random directions of the base state block.
pub fn run_landscape(cfg: &ExperimentConfig, root: &Path) -> Result<ExperimentReport> {
    let ExperimentSpec::Landscape {
        sample_times,
        probes,
        magnitudes,
        grid_points,
        grid_span,
    } = &cfg.experiment
    else {
        return Err(HarnessError::Invalid(vec![FieldError::new(
            "experiment.kind",
            "expected landscape",
        )]));
    };
    let mut report = new_report(cfg);
    let hash = report.config_hash.clone();
    let cells = per_seed::<Surfaces>(&cfg.run_seeds(), |cell| {
        let seed = cell.seed;
        let out = cell.attempt("DEM", "", || {
            let data = data::load(cfg, seed)?;
            let model = cfg.model()?;
            let dcfg = cfg.dem_config(&model, cfg.dem.p, cfg.dem.d, data.dt)?;
            let matrices = assemble_observer(&model, &dcfg)?;
            let run = run_with_matrices(&matrices, &dcfg, &data, true)?;
            Ok((data, matrices, run))
        });
        let times = match &out {
            Some((data, ..)) => sample_indices(data.len(), skip_samples(cfg.transient_skip, data.dt), *sample_times),
            None => (0..*sample_times).collect(),
        };
        let Some((data, matrices, run)) = out else {
            for j in 0..times.len() {
                cell.push("DEM", &format!("time={j}"), "is_peak", "", "", None);
            }
            return;
        };
        let dim = matrices.dim();
        let mut peaks = 0usize;
        for (j, &k) in times.iter().enumerate() {
            let x = run.estimates.row(k).transpose();
            let y = run.y_gen.row(k).transpose();
            let t = k as f64 * data.dt;
            let dirs = random_directions::<f64>(
                derive_seed(seed, Stream::Landscape, j as u64),
                dim,
                0,
                STATE_DIM,
                *probes,
            );
            let setting = format!("time={j}");
            let land = cell.attempt("DEM", &setting, || {
                Ok(free_energy_landscape(
                    &matrices,
                    &x,
                    &y,
                    &run.eta_gen,
                    &dirs,
                    magnitudes,
                    LANDSCAPE_SLACK,
                )?)
            });
            let Some(land) = land else {
                cell.push("DEM", &setting, "is_peak", "", "", None);
                continue;
            };
            for (i, row) in land.values.iter().enumerate() {
                for (m, v) in magnitudes.iter().zip(row) {
                    let delta = v - land.center;
                    if *m == 0.0 {
                        cell.extra.zero_deltas.push(delta);
                    }
                    cell.extra.probes.push(vec![
                        hash.clone(),
                        seed.to_string(),
                        j.to_string(),
                        k.to_string(),
                        fmt_f64(t),
                        i.to_string(),
                        fmt_f64(*m),
                        fmt_f64(land.center),
                        fmt_f64(*v),
                        fmt_f64(delta),
                    ]);
                }
            }
            if *grid_points >= 2 {
                let steps = *grid_points - 1;
                for a in 0..=steps {
                    for b in 0..=steps {
                        let off = |span: f64, i: usize| span * (2.0 * i as f64 / steps as f64 - 1.0);
                        let (d0, d1) = (off(grid_span[0], a), off(grid_span[1], b));
                        let mut shifted = x.clone();
                        shifted[0] += d0;
                        shifted[1] += d1;
                        let v = matrices.free_energy_at(&shifted, &y, &run.eta_gen).unwrap_or(f64::NAN);
                        cell.extra.grid.push(vec![
                            hash.clone(),
                            seed.to_string(),
                            j.to_string(),
                            fmt_f64(t),
                            fmt_f64(d0),
                            fmt_f64(d1),
                            fmt_f64(v),
                            fmt_f64(v - land.center),
                        ]);
                    }
                }
            }
            cell.extra.summary.push(vec![
                hash.clone(),
                seed.to_string(),
                j.to_string(),
                k.to_string(),
                fmt_f64(t),
                fmt_f64(land.center),
                fmt_f64(land.max_probe),
                land.is_peak.to_string(),
            ]);
            peaks += usize::from(land.is_peak);
            cell.push(
                "DEM",
                &setting,
                "is_peak",
                "",
                "",
                Some(if land.is_peak { 1.0 } else { 0.0 }),
            );
            cell.push(
                "DEM",
                &setting,
                "peak_margin",
                "",
                "",
                Some(land.center - land.max_probe),
            );
        }
        cell.push(
            "DEM",
            "",
            "pass_rate",
            "",
            "",
            Some(peaks as f64 / times.len().max(1) as f64),
        );
    });
    let extras = collect(&mut report, cells);

    let evaluated: Vec<f64> = report
        .metrics
        .iter()
        .filter(|m| m.metric == "is_peak")
        .filter_map(|m| m.value)
        .collect();
    let total = report.metrics.iter().filter(|m| m.metric == "is_peak").count();
    let passed = evaluated.iter().filter(|v| **v == 1.0).count();
    report
        .values
        .insert("pass_rate".into(), passed as f64 / total.max(1) as f64);
    report.check(
        "all_times_peak",
        total > 0 && passed == total,
        format!("{passed} of {total} sample times have the estimate at or above every probe"),
    );
    let zero: Vec<f64> = extras.iter().flat_map(|(_, s)| s.zero_deltas.iter().copied()).collect();
    if magnitudes.contains(&0.0) {
        report.check(
            "zero_magnitude_deltas_vanish",
            zero.iter().all(|d| *d == 0.0),
            format!("{} zero-magnitude probes", zero.len()),
        );
    }

    let mut em = Emitter::new(root)?;
    let gather = |f: fn(&Surfaces) -> &Vec<Vec<String>>| -> Vec<Vec<String>> {
        extras.iter().flat_map(|(_, s)| f(s).iter().cloned()).collect()
    };
    em.csv(
        "landscape_probes.csv",
        "free energy at random perturbations of the estimate",
        &[
            "config_hash",
            "seed",
            "time_index",
            "sample",
            "t",
            "probe",
            "magnitude",
            "v_center",
            "v_probe",
            "delta",
        ],
        &gather(|s| &s.probes),
    )?;
    em.csv(
        "landscape_grid.csv",
        "free energy surface over (phi, phidot) offsets at each sample time",
        &[
            "config_hash",
            "seed",
            "time_index",
            "t",
            "d_phi",
            "d_phidot",
            "v",
            "delta",
        ],
        &gather(|s| &s.grid),
    )?;
    em.csv(
        "landscape_summary.csv",
        "whether the estimate is the maximum at each sample time",
        &[
            "config_hash",
            "seed",
            "time_index",
            "sample",
            "t",
            "v_center",
            "max_probe",
            "is_peak",
        ],
        &gather(|s| &s.summary),
    )?;
    finish(em, report)
}
