//! Colored noise: Gaussian smoothing kernel, synthesis, the temporal
//! precision of noise derivatives, and the diagnostics used to check that
//! recorded noise really is smooth and Gaussian.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gencoord::MAX_EMBEDDING_ORDER;
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Smoothness used to represent white noise. `S(σ²)` needs σ > 0.
pub const WHITE_NOISE_SIGMA: f64 = 1e-6;

/// Default kernel support, in units of σ.
pub const KERNEL_SUPPORT_SIGMAS: f64 = 4.0;

/// Largest derivative order accepted by [`temporal_precision`].
pub const MAX_TEMPORAL_ORDER: usize = MAX_EMBEDDING_ORDER;

/// Noise smoothness and the precisions of process noise, measurement
/// noise and the input prior.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<T: Real> {
    pub sigma: T,
    pub proc_precision: DMatrix<T>,
    pub meas_precision: DMatrix<T>,
    pub input_prior_precision: DMatrix<T>,
}

impl<T: Real> NoiseSpec<T> {
    pub fn new(
        sigma: T,
        proc_precision: DMatrix<T>,
        meas_precision: DMatrix<T>,
        input_prior_precision: DMatrix<T>,
    ) -> Result<Self> {
        if !(sigma > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("must be positive, got {sigma}"),
            });
        }
        require_spd(&proc_precision, "proc_precision")?;
        require_spd(&meas_precision, "meas_precision")?;
        require_psd(&input_prior_precision, "input_prior_precision")?;
        Ok(Self {
            sigma,
            proc_precision,
            meas_precision,
            input_prior_precision,
        })
    }

    /// Same precisions with a different input prior.
    pub fn with_input_prior(mut self, precision: DMatrix<T>) -> Result<Self> {
        require_psd(&precision, "input_prior_precision")?;
        self.input_prior_precision = precision;
        Ok(self)
    }
}

fn is_symmetric<T: Real>(m: &DMatrix<T>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(T::one());
    let tol = lit::<T>(1e-12) * scale;
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

pub(crate) fn require_spd<T: Real>(m: &DMatrix<T>, name: &'static str) -> Result<()> {
    if !is_symmetric(m) || m.clone().cholesky().is_none() {
        return Err(Error::NotDefinite {
            name,
            property: "symmetric positive definite",
        });
    }
    Ok(())
}

pub(crate) fn require_psd<T: Real>(m: &DMatrix<T>, name: &'static str) -> Result<()> {
    if !is_symmetric(m) {
        return Err(Error::NotDefinite {
            name,
            property: "symmetric positive semidefinite",
        });
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let min = m.clone().symmetric_eigenvalues().min();
    if min < -lit::<T>(1e-12) * m.amax().max(T::one()) {
        return Err(Error::NotDefinite {
            name,
            property: "symmetric positive semidefinite",
        });
    }
    Ok(())
}

/// `diag(Π̃^z, P^ṽ, Π̃^w)`, stored block by block.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPrecision<T: Real> {
    /// `S(σ², p) ⊗ Π^z`
    pub meas: DMatrix<T>,
    /// `S(σ², d) ⊗ P^v`
    pub input_prior: DMatrix<T>,
    /// `S(σ², p) ⊗ Π^w`
    pub proc: DMatrix<T>,
}

impl<T: Real> GeneralizedPrecision<T> {
    pub fn dim(&self) -> usize {
        self.meas.nrows() + self.input_prior.nrows() + self.proc.nrows()
    }

    /// The assembled block-diagonal matrix.
    pub fn full(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut at = 0;
        for block in [&self.meas, &self.input_prior, &self.proc] {
            let k = block.nrows();
            out.view_mut((at, at), (k, k)).copy_from(block);
            at += k;
        }
        out
    }
}

/// Number of taps on each side of the kernel center giving
/// [`KERNEL_SUPPORT_SIGMAS`] of support.
pub fn default_half_width<T: Real>(sigma: T, dt: T) -> usize {
    let taps = (to_f64(sigma) * KERNEL_SUPPORT_SIGMAS / to_f64(dt)).ceil();
    (taps as usize).max(1)
}

/// Samples of `K(t) = exp(-t²/2σ²) / (√(2π) σ)` at `t = k dt`,
/// `k = -half_width ..= half_width`, renormalized to unit sum.
pub fn gaussian_kernel<T: Real>(sigma: T, dt: T, half_width: usize) -> Result<Vec<T>> {
    if !(sigma > T::zero()) || !(dt > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "sigma/dt",
            reason: "must be positive".into(),
        });
    }
    if half_width == 0 {
        return Err(Error::InvalidParameter {
            name: "half_width",
            reason: "must be at least 1".into(),
        });
    }
    let support = from_usize::<T>(half_width) * dt;
    let three_sigma = lit::<T>(3.0) * sigma;
    if support < three_sigma * lit(1.0 - 1e-12) {
        return Err(Error::KernelTruncation {
            support: to_f64(support),
            three_sigma: to_f64(three_sigma),
        });
    }
    let hw = half_width as i64;
    let taps: Vec<T> = (-hw..=hw)
        .map(|k| kernel_density(sigma, lit::<T>(k as f64) * dt))
        .collect();
    let total = taps.iter().fold(T::zero(), |a, b| a + *b);
    Ok(taps.into_iter().map(|t| t / total).collect())
}

/// The unnormalized kernel density at time `t`.
pub fn kernel_density<T: Real>(sigma: T, t: T) -> T {
    let z = t / sigma;
    (-(z * z) / lit(2.0)).exp() / (T::two_pi().sqrt() * sigma)
}

/// Autocorrelation induced by Gaussian-kernel smoothing of white noise,
/// `ρ(h) = exp(-h² / 4σ²)`.
pub fn smoothed_autocorrelation<T: Real>(sigma: T, lag: T) -> T {
    (-(lag * lag) / (lit::<T>(4.0) * sigma * sigma)).exp()
}

/// Stationary Gaussian noise with marginal covariance `covariance` and
/// autocorrelation `≈ exp(-h²/4σ²)`.
///
/// Each channel is an independent white stream convolved with the
/// normalized kernel taps and rescaled to unit variance; the channels are
/// then mixed by the Cholesky factor of `covariance`. Rows are time steps.
pub fn generate_colored_noise<T: Real>(
    seed: u64,
    sigma: T,
    covariance: &DMatrix<T>,
    n_steps: usize,
    dt: T,
) -> Result<DMatrix<T>> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter {
            name: "n_steps",
            reason: "must be at least 1".into(),
        });
    }
    require_spd(covariance, "covariance")?;
    let chol = covariance.clone().cholesky().expect("checked SPD").unpack();
    let taps = gaussian_kernel(sigma, dt, default_half_width(sigma, dt))?;
    let taps: Vec<f64> = taps.into_iter().map(to_f64).collect();
    let gain = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    let width = taps.len();
    let n = covariance.nrows();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = DMatrix::<T>::zeros(n_steps, n);
    for channel in 0..n {
        let white: Vec<f64> = (0..n_steps + width - 1)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        for k in 0..n_steps {
            let acc: f64 = taps.iter().zip(&white[k..k + width]).map(|(h, w)| h * w).sum();
            unit[(k, channel)] = lit(acc / gain);
        }
    }
    Ok(unit * chol.transpose())
}

/// `(2k-1)!!` with `(-1)!! = 1`.
fn double_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (2 * i - 1) as f64).product()
}

/// Covariance among the first `order` derivatives of smoothed noise,
/// `Σ̃[i][j] = (-1)^i ρ^(i+j)(0)`.
///
/// With `a = 1/(2σ²)`, `ρ^(2k)(0) = (-1)^k (2k-1)!! a^k` and odd
/// derivatives vanish. The result factors as `Λ M Λ` with
/// `Λ = diag(a^(i/2))` and an integer matrix `M`; see
/// [`temporal_precision`].
pub fn temporal_covariance<T: Real>(sigma: T, order: usize) -> Result<DMatrix<T>> {
    let (moments, scale) = temporal_factors(sigma, order)?;
    Ok(DMatrix::from_fn(order + 1, order + 1, |i, j| {
        scale[i] * moments[(i, j)] * scale[j]
    }))
}

fn temporal_factors<T: Real>(sigma: T, order: usize) -> Result<(DMatrix<T>, DVector<T>)> {
    if !(sigma > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("must be positive, got {sigma}"),
        });
    }
    if order > MAX_TEMPORAL_ORDER {
        return Err(Error::OrderCap {
            order,
            max: MAX_TEMPORAL_ORDER,
        });
    }
    let moments = DMatrix::from_fn(order + 1, order + 1, |i, j| {
        if (i + j) % 2 == 1 {
            return T::zero();
        }
        let k = (i + j) / 2;
        let sign = if (i + k) % 2 == 0 { 1.0 } else { -1.0 };
        lit(sign * double_factorial(k))
    });
    let a = T::one() / (lit::<T>(2.0) * sigma * sigma);
    let scale = DVector::from_fn(order + 1, |i, _| a.powf(lit::<T>(i as f64 / 2.0)));
    Ok((moments, scale))
}

/// Temporal precision `S(σ²) = Σ̃⁻¹` of the noise and its first `order`
/// derivatives.
///
/// Inverted through the factorization `Σ̃ = Λ M Λ`, so
/// `S = Λ⁻¹ M⁻¹ Λ⁻¹`; only the σ-independent `M` is factorized, which keeps
/// the white-noise limit (σ → 0, `a` → ∞) numerically benign.
pub fn temporal_precision<T: Real>(sigma: T, order: usize) -> Result<DMatrix<T>> {
    let (moments, scale) = temporal_factors(sigma, order)?;
    let m_inv = moments
        .cholesky()
        .ok_or(Error::NotDefinite {
            name: "temporal moment matrix",
            property: "positive definite",
        })?
        .inverse();
    let s = DMatrix::from_fn(order + 1, order + 1, |i, j| m_inv[(i, j)] / (scale[i] * scale[j]));
    Ok((&s + s.transpose()) * lit::<T>(0.5))
}

/// `diag(S(σ²,p) ⊗ Π^z, S(σ²,d) ⊗ P^v, S(σ²,p) ⊗ Π^w)`.
pub fn generalized_precision<T: Real>(spec: &NoiseSpec<T>, p: usize, d: usize) -> Result<GeneralizedPrecision<T>> {
    let s_p = temporal_precision(spec.sigma, p)?;
    let s_d = temporal_precision(spec.sigma, d)?;
    Ok(GeneralizedPrecision {
        meas: s_p.kronecker(&spec.meas_precision),
        input_prior: s_d.kronecker(&spec.input_prior_precision),
        proc: s_p.kronecker(&spec.proc_precision),
    })
}

fn mean_of<T: Real>(series: &[T]) -> T {
    series.iter().fold(T::zero(), |a, b| a + *b) / from_usize(series.len())
}

/// Biased sample autocorrelation `r(0..=max_lag)`, with `r(0) = 1`.
pub fn autocorrelation<T: Real>(series: &[T], max_lag: usize) -> Result<Vec<T>> {
    if series.len() <= max_lag + 1 {
        return Err(Error::TooShort {
            needed: max_lag + 2,
            actual: series.len(),
        });
    }
    let mean = mean_of(series);
    let centered: Vec<T> = series.iter().map(|x| *x - mean).collect();
    let denom = centered.iter().fold(T::zero(), |a, x| a + *x * *x);
    if denom == T::zero() {
        return Err(Error::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|h| {
            let num = centered[..centered.len() - h]
                .iter()
                .zip(&centered[h..])
                .fold(T::zero(), |a, (x, y)| a + *x * *y);
            num / denom
        })
        .collect())
}

/// Location, scale and Kolmogorov–Smirnov distance of a series against
/// the normal distribution with those parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub mean: f64,
    pub std: f64,
    pub ks_statistic: f64,
}

impl GaussianFit {
    /// KS critical value at significance 0.01.
    pub fn ks_critical_01(n: usize) -> f64 {
        1.63 / (n as f64).sqrt()
    }
}

pub fn gaussian_fit<T: Real>(series: &[T]) -> Result<GaussianFit> {
    const MIN_LEN: usize = 30;
    if series.len() < MIN_LEN {
        return Err(Error::TooShort {
            needed: MIN_LEN,
            actual: series.len(),
        });
    }
    let xs: Vec<f64> = series.iter().map(|x| to_f64(*x)).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let std = var.sqrt();
    let mut sorted = xs;
    sorted.sort_by(f64::total_cmp);
    let ks = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let cdf = 0.5 * (1.0 + statrs::function::erf::erf((x - mean) / (std * 2f64.sqrt())));
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            (cdf - lo).abs().max((hi - cdf).abs())
        })
        .fold(0.0, f64::max);
    Ok(GaussianFit {
        mean,
        std,
        ks_statistic: ks,
    })
}

/// Equal-width histogram over `[min, max]` of the series: returns
/// `(bin centers, counts)`.
pub fn histogram<T: Real>(series: &[T], bins: usize) -> (Vec<f64>, Vec<usize>) {
    let xs: Vec<f64> = series.iter().map(|x| to_f64(*x)).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = bins.max(1);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for x in &xs {
        let idx = (((x - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let centers = (0..bins).map(|i| lo + (i as f64 + 0.5) * width).collect();
    (centers, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_peak_symmetry_and_sum() {
        let sigma = 0.01;
        assert_relative_eq!(
            kernel_density(sigma, 0.0),
            1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
        );
        let taps = gaussian_kernel(sigma, 0.001, 50).unwrap();
        assert_eq!(taps.len(), 101);
        for k in 0..50 {
            assert_eq!(taps[k], taps[100 - k]);
        }
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kernel_truncation_rejected() {
        assert!(matches!(
            gaussian_kernel(0.05, 0.01, 10),
            Err(Error::KernelTruncation { .. })
        ));
        assert!(gaussian_kernel(0.05, 0.01, 15).is_ok());
    }

    #[test]
    fn temporal_precision_low_orders() {
        let sigma = 0.3;
        let s0 = temporal_precision(sigma, 0).unwrap();
        assert_relative_eq!(s0[(0, 0)], 1.0);
        let s1 = temporal_precision(sigma, 1).unwrap();
        assert_relative_eq!(
            s1,
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0 * sigma * sigma]),
            epsilon = 1e-14
        );
    }

    #[test]
    fn temporal_covariance_has_odd_zeros() {
        let cov = temporal_covariance(0.05, 6).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                if (i + j) % 2 == 1 {
                    assert_eq!(cov[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn temporal_precision_rejects_bad_input() {
        assert!(temporal_precision(0.0, 2).is_err());
        assert!(matches!(
            temporal_precision(0.1, MAX_TEMPORAL_ORDER + 1),
            Err(Error::OrderCap { .. })
        ));
    }

    #[test]
    fn white_noise_sigma_is_finite() {
        let s = temporal_precision(WHITE_NOISE_SIGMA, 6).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
        let s2 = temporal_precision(WHITE_NOISE_SIGMA, 2).unwrap();
        assert_relative_eq!(
            s2[(1, 1)],
            2.0 * WHITE_NOISE_SIGMA * WHITE_NOISE_SIGMA,
            max_relative = 1e-9
        );
        let wider = temporal_precision(10.0 * WHITE_NOISE_SIGMA, 6).unwrap();
        assert_relative_eq!(wider[(1, 1)] / s[(1, 1)], 100.0, max_relative = 1e-9);
    }

    #[test]
    fn generalized_precision_order_zero_is_plain() {
        let spec = NoiseSpec::new(
            0.05,
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])),
            DMatrix::from_element(1, 1, 7.0),
            DMatrix::from_element(1, 1, 0.5),
        )
        .unwrap();
        let pi = generalized_precision(&spec, 0, 0).unwrap();
        assert_eq!(pi.meas, spec.meas_precision);
        assert_eq!(pi.input_prior, spec.input_prior_precision);
        assert_eq!(pi.proc, spec.proc_precision);
        let full = pi.full();
        assert_eq!(full, full.transpose());
        assert_eq!(full.nrows(), 4);
    }

    #[test]
    fn generalized_precision_scalar_case() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let spec = NoiseSpec::new(0.1, one.clone(), one.clone(), one.clone()).unwrap();
        let pi = generalized_precision(&spec, 2, 0).unwrap();
        let s = temporal_precision(0.1, 2).unwrap();
        assert_eq!(pi.meas, s);
        assert_eq!(pi.proc, s);
        assert_eq!(pi.input_prior, one);
        let full = pi.full();
        assert_eq!(full, full.transpose());
    }

    #[test]
    fn noise_spec_validation() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let neg = DMatrix::from_element(1, 1, -1.0);
        assert!(NoiseSpec::new(0.1, neg.clone(), one.clone(), one.clone()).is_err());
        assert!(NoiseSpec::new(0.1, one.clone(), one.clone(), neg).is_err());
        assert!(NoiseSpec::new(0.1, one.clone(), one.clone(), DMatrix::zeros(1, 1)).is_ok());
        assert!(NoiseSpec::new(-0.1, one.clone(), one.clone(), one).is_err());
    }

    #[test]
    fn autocorrelation_basics() {
        let series: Vec<f64> = (0..1000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = autocorrelation(&series, 2).unwrap();
        assert_eq!(r[0], 1.0);
        // Closed form for the alternating sequence: r(1) = -(N-1)/N.
        assert_relative_eq!(r[1], -0.999, epsilon = 1e-12);
        assert!(matches!(autocorrelation(&[2.0; 10], 2), Err(Error::ZeroVariance)));
        assert!(autocorrelation(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn gaussian_fit_location_and_degenerate() {
        let noise =
            generate_colored_noise(3, WHITE_NOISE_SIGMA, &DMatrix::from_element(1, 1, 0.04), 2000, 0.01).unwrap();
        let series: Vec<f64> = noise.column(0).iter().map(|x| 5.0 + x).collect();
        let fit = gaussian_fit(&series).unwrap();
        assert!((fit.mean - 5.0).abs() < 0.02);
        assert!((fit.std - 0.2).abs() < 0.02);
        assert!(matches!(gaussian_fit(&[1.0; 40]), Err(Error::ZeroVariance)));
        assert!(matches!(gaussian_fit(&[1.0; 10]), Err(Error::TooShort { .. })));
    }

    #[test]
    fn generation_is_deterministic() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let a = generate_colored_noise(11, 0.05, &cov, 500, 0.0083).unwrap();
        let b = generate_colored_noise(11, 0.05, &cov, 500, 0.0083).unwrap();
        assert!(a
            .iter()
            .zip(b.iter())
            .all(|(x, y): (&f64, &f64)| x.to_bits() == y.to_bits()));
        let c = generate_colored_noise(12, 0.05, &cov, 500, 0.0083).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn histogram_counts_everything() {
        let xs: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let (centers, counts) = histogram(&xs, 10);
        assert_eq!(centers.len(), 10);
        assert_eq!(counts.iter().sum::<usize>(), 100);
        assert!(counts.iter().all(|c| *c == 10));
    }
}
