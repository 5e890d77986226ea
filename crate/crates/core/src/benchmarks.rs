//! Baseline estimators: Kalman filter, state augmentation with AR process
//! noise, an AR(1)-aware Kalman filter (SMIKF), the unknown input
//! observer, Yule–Walker AR fitting and the SSE metric.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::dem::eigenvalues;
use crate::error::{Error, Result};
use crate::gencoord::Embedder;
use crate::noise::autocorrelation;
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::systems::{discretize, input_drive, ExperimentData, LtiModel};

/// Upper bound on the augmented state size of [`state_augmentation_filter`].
pub const MAX_AUGMENTED_DIM: usize = 128;
/// Default transient excluded from comparative SSE (seconds).
pub const DEFAULT_TRANSIENT_SKIP: f64 = 0.5;

/// Discrete system seen by a Kalman filter:
/// `x_{k+1} = Ad x_k + drive_k + noise`, `y_k = C x_k + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanSystem<T: Real> {
    pub ad: DMatrix<T>,
    pub c: DMatrix<T>,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
}

/// Filtered means (rows are time) and covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput<T: Real> {
    pub means: DMatrix<T>,
    pub covariances: Vec<DMatrix<T>>,
}

/// `Q = dt² · diag(variances)`: the covariance of `w_k dt` for white
/// process noise with the given per-channel variances.
pub fn white_process_covariance<T: Real>(dt: T, variances: &[T]) -> DMatrix<T> {
    DMatrix::from_diagonal(&DVector::from_column_slice(variances)) * (dt * dt)
}

/// Standard predict/update recursion. Sample 0 is an update of the prior
/// `(x0, p0)`; sample `k > 0` first predicts with `drive[k-1]`.
pub fn kalman_filter<T: Real>(
    system: &KalmanSystem<T>,
    measurements: &DMatrix<T>,
    drive: &[DVector<T>],
    x0: &DVector<T>,
    p0: &DMatrix<T>,
) -> Result<KalmanOutput<T>> {
    let n = system.ad.nrows();
    let m = system.c.nrows();
    let len = measurements.nrows();
    let dims = [
        ("C columns", n, system.c.ncols()),
        ("Q size", n, system.q.nrows()),
        ("R size", m, system.r.nrows()),
        ("measurement channels", m, measurements.ncols()),
        ("initial state", n, x0.len()),
        ("initial covariance", n, p0.nrows()),
        (
            "input drive length",
            len.saturating_sub(1),
            drive.len().min(len.saturating_sub(1)),
        ),
    ];
    for (context, expected, actual) in dims {
        if expected != actual {
            return Err(Error::Dimension {
                context,
                expected,
                actual,
            });
        }
    }
    let identity = DMatrix::<T>::identity(n, n);
    let ct = system.c.transpose();
    let adt = system.ad.transpose();
    let mut x = x0.clone();
    let mut p = p0.clone();
    let mut means = DMatrix::zeros(len, n);
    let mut covariances = Vec::with_capacity(len);
    for k in 0..len {
        if k > 0 {
            x = &system.ad * &x + &drive[k - 1];
            p = &system.ad * &p * &adt + &system.q;
        }
        let s = &system.c * &p * &ct + &system.r;
        let chol = s.cholesky().ok_or(Error::SingularInnovation { step: k })?;
        let gain = chol.solve(&(&system.c * &p)).transpose();
        let innovation = measurements.row(k).transpose() - &system.c * &x;
        x += &gain * innovation;
        p = (&identity - &gain * &system.c) * &p;
        if x.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
        means.row_mut(k).copy_from(&x.transpose());
        covariances.push(p.clone());
    }
    Ok(KalmanOutput { means, covariances })
}

/// Kalman filter on `model` discretized at the data's sample interval,
/// with the input drive consistent with the data's input hold.
pub fn kalman_filter_lti<T: Real>(
    model: &LtiModel<T>,
    data: &ExperimentData<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    x0: &DVector<T>,
    p0: &DMatrix<T>,
) -> Result<KalmanOutput<T>> {
    let (ad, _) = discretize(model, data.dt);
    let drive = input_drive(model, data.dt, &data.inputs, data.input_hold);
    let system = KalmanSystem {
        ad,
        c: model.c.clone(),
        q: q.clone(),
        r: r.clone(),
    };
    kalman_filter(&system, &data.measurements, &drive, x0, p0)
}

/// Scalar autoregressive model `w_k = Σ a_i w_{k-i} + ε_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel<T: Real> {
    pub coefficients: Vec<T>,
    pub innovation_variance: T,
    /// Sample variance of the fitted series.
    pub marginal_variance: T,
}

impl<T: Real> ArModel<T> {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Order after dropping trailing zero coefficients.
    pub fn effective_order(&self) -> usize {
        self.coefficients
            .iter()
            .rposition(|a| *a != T::zero())
            .map_or(0, |i| i + 1)
    }

    /// All roots of `1 - a₁z - … - a_q z^q` lie outside the unit circle,
    /// i.e. the companion matrix is a contraction in spectrum.
    pub fn is_stationary(&self) -> bool {
        let q = self.effective_order();
        if q == 0 {
            return true;
        }
        match eigenvalues(&companion(&self.coefficients[..q])) {
            Some(eig) => eig.iter().all(|(re, im)| *re * *re + *im * *im < T::one()),
            None => false,
        }
    }
}

fn companion<T: Real>(a: &[T]) -> DMatrix<T> {
    let q = a.len();
    let mut m = DMatrix::zeros(q, q);
    for (j, v) in a.iter().enumerate() {
        m[(0, j)] = *v;
    }
    for i in 1..q {
        m[(i, i - 1)] = T::one();
    }
    m
}

/// Yule–Walker fit via Levinson–Durbin on the biased sample
/// autocovariance.
pub fn fit_ar<T: Real>(series: &[T], order: usize) -> Result<ArModel<T>> {
    if order == 0 {
        return Err(Error::InvalidParameter {
            name: "order",
            reason: "must be at least 1".into(),
        });
    }
    if series.len() < 2 * order + 2 {
        return Err(Error::TooShort {
            needed: 2 * order + 2,
            actual: series.len(),
        });
    }
    let len = from_usize::<T>(series.len());
    let mean = series.iter().fold(T::zero(), |a, b| a + *b) / len;
    let gamma: Vec<T> = (0..=order)
        .map(|h| {
            series[h..]
                .iter()
                .zip(series)
                .fold(T::zero(), |acc, (a, b)| acc + (*a - mean) * (*b - mean))
                / len
        })
        .collect();
    if !(gamma[0] > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    let mut a: Vec<T> = Vec::with_capacity(order);
    let mut err = gamma[0];
    for k in 1..=order {
        let acc = (1..k).fold(gamma[k], |s, j| s - a[j - 1] * gamma[k - j]);
        let reflection = acc / err;
        let previous = a.clone();
        for j in 1..k {
            a[j - 1] = previous[j - 1] - reflection * previous[k - j - 1];
        }
        a.push(reflection);
        err *= T::one() - reflection * reflection;
        if !(err > T::zero()) {
            return Err(Error::NotDefinite {
                name: "autocovariance Toeplitz system",
                property: "positive definite",
            });
        }
    }
    let model = ArModel {
        coefficients: a,
        innovation_variance: err,
        marginal_variance: gamma[0],
    };
    if !model.is_stationary() {
        warn!("fitted AR({order}) model is not stationary");
    }
    Ok(model)
}

/// Cheap whiteness check used by tests and diagnostics: sample
/// autocorrelation of a series at lags `1..=max_lag`.
pub fn residual_autocorrelation<T: Real>(series: &[T], max_lag: usize) -> Result<Vec<T>> {
    Ok(autocorrelation(series, max_lag)?.into_iter().skip(1).collect())
}

/// Kalman filter on `[x_k; w_{k-1}; …; w_{k-q}]`, one AR model per state
/// channel of the process noise. Returns the `x` block.
pub fn state_augmentation_filter<T: Real>(
    model: &LtiModel<T>,
    ar: &[ArModel<T>],
    data: &ExperimentData<T>,
    r: &DMatrix<T>,
    x0: &DVector<T>,
    p0: &DMatrix<T>,
) -> Result<KalmanOutput<T>> {
    let n = model.n();
    if ar.len() != n {
        return Err(Error::Dimension {
            context: "AR models per state channel",
            expected: n,
            actual: ar.len(),
        });
    }
    let dt = data.dt;
    let innovations: Vec<T> = ar.iter().map(|m| m.innovation_variance).collect();
    let q = ar.iter().map(ArModel::effective_order).max().unwrap_or(0);
    if q == 0 {
        let qm = white_process_covariance(dt, &innovations);
        return kalman_filter_lti(model, data, &qm, r, x0, p0);
    }
    let dim = n + n * q;
    if dim > MAX_AUGMENTED_DIM {
        return Err(Error::AugmentedTooLarge {
            dim,
            max: MAX_AUGMENTED_DIM,
        });
    }
    let (ad, _) = discretize(model, dt);
    let mut f = DMatrix::zeros(dim, dim);
    f.view_mut((0, 0), (n, n)).copy_from(&ad);
    let mut g = DMatrix::zeros(dim, n);
    for (i, m) in ar.iter().enumerate() {
        for (j, a) in m.coefficients.iter().take(q).enumerate() {
            f[(i, n + j * n + i)] = dt * *a;
            f[(n + i, n + j * n + i)] = *a;
        }
        g[(i, i)] = dt;
        g[(n + i, i)] = T::one();
    }
    for j in 1..q {
        f.view_mut((n + j * n, n + (j - 1) * n), (n, n)).fill_with_identity();
    }
    let qe = DMatrix::from_diagonal(&DVector::from_vec(innovations));
    let mut c = DMatrix::zeros(model.m(), dim);
    c.view_mut((0, 0), (model.m(), n)).copy_from(&model.c);
    check_square("initial state", n, x0.len())?;
    check_square("initial covariance", n, p0.nrows())?;
    let mut xa = DVector::zeros(dim);
    xa.rows_mut(0, n).copy_from(x0);
    let mut pa = DMatrix::zeros(dim, dim);
    pa.view_mut((0, 0), (n, n)).copy_from(p0);
    for j in 0..q {
        for (i, m) in ar.iter().enumerate() {
            pa[(n + j * n + i, n + j * n + i)] = m.marginal_variance;
        }
    }
    let drive: Vec<DVector<T>> = input_drive(model, dt, &data.inputs, data.input_hold)
        .into_iter()
        .map(|d| {
            let mut v = DVector::zeros(dim);
            v.rows_mut(0, n).copy_from(&d);
            v
        })
        .collect();
    let system = KalmanSystem {
        ad: f,
        c,
        q: &g * qe * g.transpose(),
        r: r.clone(),
    };
    let out = kalman_filter(&system, &data.measurements, &drive, &xa, &pa)?;
    Ok(KalmanOutput {
        means: out.means.columns(0, n).into_owned(),
        covariances: out
            .covariances
            .into_iter()
            .map(|p| p.view((0, 0), (n, n)).into_owned())
            .collect(),
    })
}

fn check_square(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}

/// Kalman filter whose prediction carries AR(1) process noise
/// `w_k = a w_{k-1} + ε_k` together with its cross covariance with the
/// state. `innovation_variance` is the per-channel variance of `ε`. With
/// every `a = 0` this is the plain filter with `Q = dt² diag(var)`.
pub fn smikf<T: Real>(
    model: &LtiModel<T>,
    a: &[T],
    innovation_variance: &[T],
    data: &ExperimentData<T>,
    r: &DMatrix<T>,
    x0: &DVector<T>,
    p0: &DMatrix<T>,
) -> Result<KalmanOutput<T>> {
    let n = model.n();
    check_square("AR(1) coefficients", n, a.len())?;
    check_square("innovation variances", n, innovation_variance.len())?;
    if let Some(bad) = a.iter().position(|v| !(v.abs() < T::one())) {
        return Err(Error::InvalidParameter {
            name: "a",
            reason: format!("channel {bad}: AR(1) coefficient must satisfy |a| < 1"),
        });
    }
    let dt = data.dt;
    if a.iter().all(|v| *v == T::zero()) {
        let q = white_process_covariance(dt, innovation_variance);
        return kalman_filter_lti(model, data, &q, r, x0, p0);
    }
    check_square("initial state", n, x0.len())?;
    check_square("initial covariance", n, p0.nrows())?;
    let (ad, _) = discretize(model, dt);
    let drive = input_drive(model, dt, &data.inputs, data.input_hold);
    let a_m = DMatrix::from_diagonal(&DVector::from_column_slice(a));
    let qe = DMatrix::from_diagonal(&DVector::from_column_slice(innovation_variance));
    let c = &model.c;
    let ct = c.transpose();
    let identity = DMatrix::<T>::identity(n, n);

    let mut x = x0.clone();
    let mut w = DVector::zeros(n);
    let mut pxx = p0.clone();
    let mut pxw = DMatrix::zeros(n, n);
    let mut pww = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            innovation_variance[i] / (T::one() - a[i] * a[i])
        } else {
            T::zero()
        }
    });
    let len = data.len();
    let mut means = DMatrix::zeros(len, n);
    let mut covariances = Vec::with_capacity(len);
    for k in 0..len {
        if k > 0 {
            // [x; w] ← [[Ad, dt·a], [0, a]] [x; w] + [dt; 1] ε
            let fx_w = &a_m * dt;
            x = &ad * &x + &drive[k - 1] + &fx_w * &w;
            w = &a_m * &w;
            let ad_t = ad.transpose();
            let cross = &ad * &pxw * &fx_w.transpose();
            let new_xx =
                &ad * &pxx * &ad_t + &cross + cross.transpose() + &fx_w * &pww * fx_w.transpose() + &qe * (dt * dt);
            let new_xw = (&ad * &pxw + &fx_w * &pww) * &a_m + &qe * dt;
            let new_ww = &a_m * &pww * &a_m + &qe;
            pxx = new_xx;
            pxw = new_xw;
            pww = new_ww;
        }
        let s = c * &pxx * &ct + r;
        let chol = s.cholesky().ok_or(Error::SingularInnovation { step: k })?;
        let kx = chol.solve(&(c * &pxx)).transpose();
        let kw = chol.solve(&(c * &pxw)).transpose();
        let innovation = data.measurements.row(k).transpose() - c * &x;
        x += &kx * &innovation;
        w += &kw * &innovation;
        let cpxw = c * &pxw;
        pww -= &kw * &cpxw;
        pxw = (&identity - &kx * c) * &pxw;
        pxx = (&identity - &kx * c) * &pxx;
        if pxx.iter().chain(pww.iter()).chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
        means.row_mut(k).copy_from(&x.transpose());
        covariances.push(pxx.clone());
    }
    Ok(KalmanOutput { means, covariances })
}

/// Design parameters of the unknown input observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UioConfig<T: Real> {
    /// Observer error decay rate (1/s); error dynamics are `ė = -pole · e`.
    pub pole: T,
    /// Embedding order used to obtain `ẏ` from the measurements.
    pub derivative_order: usize,
}

impl<T: Real> Default for UioConfig<T> {
    fn default() -> Self {
        Self {
            pole: lit(20.0),
            derivative_order: 6,
        }
    }
}

/// Matrices of `ż = F z + K y`, `x̂ = z + H y`.
#[derive(Debug, Clone, PartialEq)]
pub struct UioDesign<T: Real> {
    pub f: DMatrix<T>,
    pub k: DMatrix<T>,
    pub h: DMatrix<T>,
    pub t: DMatrix<T>,
    pub b_pinv: DMatrix<T>,
}

/// Designs the observer with the unknown-input direction spanned by the
/// columns of `B`.
pub fn design_uio<T: Real>(model: &LtiModel<T>, pole: T) -> Result<UioDesign<T>> {
    let n = model.n();
    if !(pole > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "pole",
            reason: "decay rate must be positive".into(),
        });
    }
    let tol = lit::<T>(1e-10);
    let svd = model.b.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > tol * smax).count();
    if rank == 0 {
        return Err(Error::UioDesign("B has rank zero".into()));
    }
    let u = svd.u.expect("left singular vectors");
    let mut e = u.columns(0, rank).into_owned();
    for j in 0..rank {
        e.column_mut(j).scale_mut(svd.singular_values[j]);
    }
    let ce = &model.c * &e;
    let cb_rank = (&model.c * &model.b).rank(tol * smax.max(T::one()));
    if cb_rank != rank {
        return Err(Error::UioDesign(format!(
            "existence condition fails: rank(CB) = {cb_rank} but rank(B) = {rank}"
        )));
    }
    let ce_pinv = ce.pseudo_inverse(tol).map_err(|e| Error::UioDesign(e.to_string()))?;
    let h = &e * ce_pinv;
    let t = DMatrix::identity(n, n) - &h * &model.c;
    let ta = &t * &model.a;
    if !model.c.is_square() {
        return Err(Error::UioDesign("gain design needs a square, invertible C".into()));
    }
    let c_inv = model
        .c
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::UioDesign("C is singular".into()))?;
    let k1 = (&ta + DMatrix::identity(n, n) * pole) * c_inv;
    let f = &ta - &k1 * &model.c;
    let k = k1 + &f * &h;
    let b_pinv = model
        .b
        .clone()
        .pseudo_inverse(tol * smax)
        .map_err(|e| Error::UioDesign(e.to_string()))?;
    Ok(UioDesign { f, k, h, t, b_pinv })
}

/// State and reconstructed-input series of the UIO (rows are time).
#[derive(Debug, Clone, PartialEq)]
pub struct UioOutput<T: Real> {
    pub states: DMatrix<T>,
    pub inputs: DMatrix<T>,
}

/// Runs the unknown input observer. `ẏ` comes from the generalized
/// embedding of the measurements; `z` is advanced exactly under a
/// first-order hold on `y`, and `v̂ = B⁺(ż + H ẏ − A x̂)`.
pub fn uio<T: Real>(model: &LtiModel<T>, data: &ExperimentData<T>, cfg: &UioConfig<T>) -> Result<UioOutput<T>> {
    let design = design_uio(model, cfg.pole)?;
    let (n, m, r) = (model.n(), model.m(), model.r());
    if data.measurements.ncols() != m {
        return Err(Error::Dimension {
            context: "measurement channels",
            expected: m,
            actual: data.measurements.ncols(),
        });
    }
    let order = cfg.derivative_order.max(1);
    let y_gen = Embedder::new().embed_series(&data.measurements, order, data.dt)?;

    let mut aug = DMatrix::zeros(n + 2 * m, n + 2 * m);
    aug.view_mut((0, 0), (n, n)).copy_from(&design.f);
    aug.view_mut((0, n), (n, m)).copy_from(&design.k);
    aug.view_mut((n, n + m), (m, m)).fill_with_identity();
    let e = (aug * data.dt).exp();
    let fd = e.view((0, 0), (n, n)).into_owned();
    let g0 = e.view((0, n), (n, m)).into_owned();
    let g1 = e.view((0, n + m), (n, m)).into_owned();

    let len = data.len();
    let mut z = DVector::zeros(n);
    let mut states = DMatrix::zeros(len, n);
    let mut inputs = DMatrix::zeros(len, r);
    for k in 0..len {
        let row = y_gen.row(k);
        let y = row.columns(0, m).transpose();
        let yd = row.columns(m, m).transpose();
        let x = &z + &design.h * &y;
        let zd = &design.f * &z + &design.k * &y;
        let xd = zd + &design.h * &yd;
        let v = &design.b_pinv * (xd - &model.a * &x);
        states.row_mut(k).copy_from(&x.transpose());
        inputs.row_mut(k).copy_from(&v.transpose());
        z = &fd * &z + &g0 * &y + &g1 * &yd;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
    }
    Ok(UioOutput { states, inputs })
}

/// `Σ (est_k − ref_k)²` over `k ≥ skip`.
pub fn sse<T: Real>(estimate: &[T], reference: &[T], skip: usize) -> Result<T> {
    if estimate.len() != reference.len() {
        return Err(Error::Dimension {
            context: "sse series lengths",
            expected: reference.len(),
            actual: estimate.len(),
        });
    }
    Ok(estimate
        .iter()
        .zip(reference)
        .skip(skip)
        .fold(T::zero(), |acc, (e, r)| acc + (*e - *r) * (*e - *r)))
}

/// Number of samples covering `seconds` at interval `dt`.
pub fn skip_samples<T: Real>(seconds: T, dt: T) -> usize {
    let f = to_f64(seconds / dt);
    if f <= 0.0 {
        0
    } else {
        f.floor() as usize
    }
}
