use dem_core::benchmarks::{
    fit_ar, kalman_filter_lti, smikf, sse, state_augmentation_filter, uio, white_process_covariance, UioConfig,
};
use dem_core::systems::{
    quadrotor_roll_model, simulate, ExperimentData, InputHold, RollOutput, ROLL_INERTIA_XX, ROLL_THRUST_COEFF,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const DT: f64 = 0.0083;
const N: usize = 1205;

fn pattern_inputs(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut u = vec![0.0; n];
    for _ in 0..3 {
        let f: f64 = rng.random_range(0.1..1.0);
        let ph: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for (k, v) in u.iter_mut().enumerate() {
            *v += 0.15 * (std::f64::consts::TAU * f * k as f64 * DT + ph).sin();
        }
    }
    DMatrix::from_fn(n, 4, |k, j| if j == 0 || j == 3 { u[k] } else { -u[k] })
}

/// Roll plant driven by AR(1) process noise with unit-scale innovations.
fn ar1_run(seed: u64, a: f64, std: [f64; 2]) -> (DMatrix<f64>, ExperimentData<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = pattern_inputs(&mut rng, N);
    let scale = (1.0 - a * a).sqrt();
    let mut w = DMatrix::zeros(N, 2);
    for c in 0..2 {
        let mut x: f64 = StandardNormal.sample(&mut rng);
        for k in 0..N {
            w[(k, c)] = x * std[c];
            let e: f64 = StandardNormal.sample(&mut rng);
            x = a * x + scale * e;
        }
    }
    let z = DMatrix::from_fn(N, 1, |_, _| {
        1e-3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    let model = quadrotor_roll_model(ROLL_INERTIA_XX, ROLL_THRUST_COEFF, RollOutput::Angle).unwrap();
    let data = simulate(&model, DT, N, &v, &w, &z, &DVector::zeros(2), InputHold::FirstOrder).unwrap();
    (w, data)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn ar1_noise_favours_noise_aware_filters() {
    let model = quadrotor_roll_model(ROLL_INERTIA_XX, ROLL_THRUST_COEFF, RollOutput::Angle).unwrap();
    let std = [0.05, 1.0];
    let a = 0.8;
    let skip = (0.5 / DT) as usize;
    let r = DMatrix::from_element(1, 1, 1e-6);
    let x0 = DVector::zeros(2);
    let p0 = DMatrix::identity(2, 2);
    let (mut kf, mut sa, mut sm) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 1..=20 {
        let (w, data) = ar1_run(seed, a, std);
        let truth = data.truth_channel(1).unwrap();
        let fits: Vec<_> = (0..2)
            .map(|c| fit_ar(&w.column(c).iter().copied().collect::<Vec<_>>(), 1).unwrap())
            .collect();
        let marg: Vec<f64> = fits.iter().map(|f| f.marginal_variance).collect();
        let q = white_process_covariance(DT, &marg);
        let e_kf = kalman_filter_lti(&model, &data, &q, &r, &x0, &p0).unwrap();
        let e_sa = state_augmentation_filter(&model, &fits, &data, &r, &x0, &p0).unwrap();
        let coeffs: Vec<f64> = fits.iter().map(|f| f.coefficients[0]).collect();
        let innov: Vec<f64> = fits.iter().map(|f| f.innovation_variance).collect();
        let e_sm = smikf(&model, &coeffs, &innov, &data, &r, &x0, &p0).unwrap();
        let col = |m: &DMatrix<f64>| m.column(1).iter().copied().collect::<Vec<_>>();
        kf.push(sse(&col(&e_kf.means), &truth, skip).unwrap());
        sa.push(sse(&col(&e_sa.means), &truth, skip).unwrap());
        sm.push(sse(&col(&e_sm.means), &truth, skip).unwrap());
    }
    let (kf, sa, sm) = (median(kf), median(sa), median(sm));
    assert!(sa <= kf, "SA {sa} vs KF {kf}");
    assert!(sm <= kf, "SMIKF {sm} vs KF {kf}");
}

#[test]
fn uio_reconstructs_noiseless_input() {
    let model = quadrotor_roll_model(ROLL_INERTIA_XX, ROLL_THRUST_COEFF, RollOutput::FullState).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v = pattern_inputs(&mut rng, N);
    let data = simulate(
        &model,
        DT,
        N,
        &v,
        &DMatrix::zeros(N, 2),
        &DMatrix::zeros(N, 2),
        &DVector::zeros(2),
        InputHold::FirstOrder,
    )
    .unwrap();
    let out = uio(&model, &data, &UioConfig::default()).unwrap();
    let skip = (0.5 / DT) as usize;
    let est: Vec<f64> = out.inputs.column(0).iter().copied().collect();
    let truth: Vec<f64> = v.column(0).iter().copied().collect();
    let err = sse(&est, &truth, skip).unwrap();
    assert!(err < 1e-3, "input sse {err}");
}

#[test]
fn kalman_filter_tracks_noiseless_plant() {
    let model = quadrotor_roll_model(ROLL_INERTIA_XX, ROLL_THRUST_COEFF, RollOutput::Angle).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let v = pattern_inputs(&mut rng, N);
    for hold in [InputHold::ZeroOrder, InputHold::FirstOrder] {
        let data = simulate(
            &model,
            DT,
            N,
            &v,
            &DMatrix::zeros(N, 2),
            &DMatrix::zeros(N, 1),
            &DVector::zeros(2),
            hold,
        )
        .unwrap();
        let q = DMatrix::identity(2, 2) * 1e-12;
        let r = DMatrix::from_element(1, 1, 1e-10);
        let out = kalman_filter_lti(&model, &data, &q, &r, &DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap();
        let est: Vec<f64> = out.means.column(1).iter().copied().collect();
        let err = sse(&est, &data.truth_channel(1).unwrap(), (0.5 / DT) as usize).unwrap();
        assert!(err < 1e-6, "{hold:?}: {err}");
    }
}
