//! The DEM observer: prediction errors, free energy, observer assembly and
//! the discrete-time gradient-ascent update over generalized states and
//! inputs `X = [x̃; ṽ]`.

use nalgebra::{DMatrix, DVector, Schur};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gencoord::{lift_matrix, lift_matrix_rect, shift_matrix, Embedder, GeneralizedVector};
use crate::noise::{generalized_precision, GeneralizedPrecision, NoiseSpec};
use crate::scalar::{lit, to_f64, Real};
use crate::systems::{ExperimentData, LtiModel};

/// Default learning rate (1/s).
pub const DEFAULT_LEARNING_RATE: f64 = 100.0;
/// Tolerance on the two-route construction of `A2`, relative to its
/// largest entry.
pub const ASSEMBLY_TOLERANCE: f64 = 1e-10;
/// Default slack when comparing free-energy values on a landscape.
pub const LANDSCAPE_SLACK: f64 = 1e-8;

/// How the observer ODE is advanced over one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Exact matrix-exponential step.
    #[default]
    Exponential,
    /// Forward Euler, for cross-checking.
    Euler,
}

/// How `u = [ỹ; −η̃]` is held within one step of the exponential integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObserverHold {
    /// `u` constant over the step.
    ZeroOrder,
    /// `u` extrapolated along its own generalized derivative, `u + τ D u`.
    #[default]
    Generalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemConfig<T: Real> {
    /// State embedding order.
    pub p: usize,
    /// Input embedding order.
    pub d: usize,
    /// Learning rate (1/s).
    pub k: T,
    pub noise: NoiseSpec<T>,
    /// Prior input mean.
    pub eta_v: DVector<T>,
    pub dt: T,
    pub integrator: Integrator,
    pub hold: ObserverHold,
    /// Initial `X`; zero when absent.
    pub x0: Option<DVector<T>>,
}

impl<T: Real> DemConfig<T> {
    pub fn new(p: usize, d: usize, k: T, noise: NoiseSpec<T>, eta_v: DVector<T>, dt: T) -> Result<Self> {
        let cfg = Self {
            p,
            d,
            k,
            noise,
            eta_v,
            dt,
            integrator: Integrator::default(),
            hold: ObserverHold::default(),
            x0: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_hold(mut self, hold: ObserverHold) -> Self {
        self.hold = hold;
        self
    }

    pub fn with_initial_estimate(mut self, x0: DVector<T>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d > self.p {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: format!("input order {} exceeds state order {}", self.d, self.p),
            });
        }
        if !(self.k >= T::zero()) {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "learning rate must be non-negative".into(),
            });
        }
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be positive".into(),
            });
        }
        if self.eta_v.len() != self.noise.input_prior_precision.nrows() {
            return Err(Error::Dimension {
                context: "prior input mean",
                expected: self.noise.input_prior_precision.nrows(),
                actual: self.eta_v.len(),
            });
        }
        Ok(())
    }

    /// `η̃`: the prior mean in block 0, zero derivatives.
    pub fn generalized_prior(&self) -> GeneralizedVector<T> {
        generalized_prior(&self.eta_v, self.d)
    }
}

pub fn generalized_prior<T: Real>(eta_v: &DVector<T>, d: usize) -> GeneralizedVector<T> {
    let r = eta_v.len();
    let mut data = DVector::zeros(r * (d + 1));
    data.rows_mut(0, r).copy_from(eta_v);
    GeneralizedVector::new(r, d, data).expect("prior layout")
}

/// Generalized state and input estimate at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedEstimate<T: Real> {
    pub states: GeneralizedVector<T>,
    pub inputs: GeneralizedVector<T>,
}

impl<T: Real> GeneralizedEstimate<T> {
    pub fn zeros(n: usize, p: usize, r: usize, d: usize) -> Self {
        Self {
            states: GeneralizedVector::zeros(n, p),
            inputs: GeneralizedVector::zeros(r, d),
        }
    }

    pub fn stacked(&self) -> DVector<T> {
        let (a, b) = (self.states.as_vector(), self.inputs.as_vector());
        let mut out = DVector::zeros(a.len() + b.len());
        out.rows_mut(0, a.len()).copy_from(a);
        out.rows_mut(a.len(), b.len()).copy_from(b);
        out
    }

    pub fn from_stacked(x: &DVector<T>, n: usize, p: usize, r: usize, d: usize) -> Result<Self> {
        let nx = n * (p + 1);
        let nv = r * (d + 1);
        if x.len() != nx + nv {
            return Err(Error::Dimension {
                context: "stacked estimate",
                expected: nx + nv,
                actual: x.len(),
            });
        }
        Ok(Self {
            states: GeneralizedVector::new(n, p, x.rows(0, nx).into_owned())?,
            inputs: GeneralizedVector::new(r, d, x.rows(nx, nv).into_owned())?,
        })
    }
}

/// Plant matrices lifted to generalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedLifts<T: Real> {
    /// `I_{p+1} ⊗ A`
    pub a: DMatrix<T>,
    /// `I_{(p+1)×(d+1)} ⊗ B`
    pub b: DMatrix<T>,
    /// `I_{p+1} ⊗ C`
    pub c: DMatrix<T>,
    /// State shift `D^x`.
    pub d_x: DMatrix<T>,
    /// Input shift `D^v`.
    pub d_v: DMatrix<T>,
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub p: usize,
    pub d: usize,
}

impl<T: Real> GeneralizedLifts<T> {
    pub fn new(model: &LtiModel<T>, p: usize, d: usize) -> Self {
        Self {
            a: lift_matrix(&model.a, p),
            b: lift_matrix_rect(&model.b, p, d),
            c: lift_matrix(&model.c, p),
            d_x: shift_matrix(p, model.n()),
            d_v: shift_matrix(d, model.r()),
            n: model.n(),
            r: model.r(),
            m: model.m(),
            p,
            d,
        }
    }

    /// Length of `x̃`.
    pub fn nx(&self) -> usize {
        self.n * (self.p + 1)
    }

    /// Length of `ṽ`.
    pub fn nv(&self) -> usize {
        self.r * (self.d + 1)
    }

    /// Length of `ỹ`.
    pub fn ny(&self) -> usize {
        self.m * (self.p + 1)
    }

    /// `D^A = D^x − Ã`
    pub fn d_a(&self) -> DMatrix<T> {
        &self.d_x - &self.a
    }
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
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

/// `ε̃ = [ỹ − C̃x̃; ṽ − η̃; D^x x̃ − Ãx̃ − B̃ṽ]` for stacked `X = [x̃; ṽ]`.
pub fn prediction_error<T: Real>(
    lifts: &GeneralizedLifts<T>,
    x: &DVector<T>,
    y_gen: &DVector<T>,
    eta_gen: &DVector<T>,
) -> Result<DVector<T>> {
    let (nx, nv, ny) = (lifts.nx(), lifts.nv(), lifts.ny());
    check_len("stacked estimate", nx + nv, x.len())?;
    check_len("generalized measurement", ny, y_gen.len())?;
    check_len("generalized prior", nv, eta_gen.len())?;
    let xs = x.rows(0, nx);
    let vs = x.rows(nx, nv);
    let mut eps = DVector::zeros(ny + nv + nx);
    eps.rows_mut(0, ny).copy_from(&(y_gen - &lifts.c * xs));
    eps.rows_mut(ny, nv).copy_from(&(vs - eta_gen));
    eps.rows_mut(ny + nv, nx).copy_from(&(lifts.d_a() * xs - &lifts.b * vs));
    Ok(eps)
}

/// `ε̃_X = [[−C̃, 0], [0, I], [D^x − Ã, −B̃]]`, constant because `ε̃` is
/// affine in `X`.
pub fn error_jacobian<T: Real>(lifts: &GeneralizedLifts<T>) -> DMatrix<T> {
    let (nx, nv, ny) = (lifts.nx(), lifts.nv(), lifts.ny());
    let mut j = DMatrix::zeros(ny + nv + nx, nx + nv);
    j.view_mut((0, 0), (ny, nx)).copy_from(&(-&lifts.c));
    j.view_mut((ny, nx), (nv, nv)).fill_with_identity();
    j.view_mut((ny + nv, 0), (nx, nx)).copy_from(&lifts.d_a());
    j.view_mut((ny + nv, nx), (nx, nv)).copy_from(&(-&lifts.b));
    j
}

/// `V = −½ ε̃ᵀ Π̃ ε̃`, evaluated block by block.
pub fn free_energy<T: Real>(eps: &DVector<T>, pi: &GeneralizedPrecision<T>) -> Result<T> {
    check_len("prediction error", pi.dim(), eps.len())?;
    let mut at = 0;
    let mut total = T::zero();
    for block in [&pi.meas, &pi.input_prior, &pi.proc] {
        let k = block.nrows();
        let e = eps.rows(at, k);
        total += e.dot(&(block * e));
        at += k;
    }
    Ok(-total / lit(2.0))
}

/// Applies the block-diagonal `Π̃` to `ε̃`.
fn apply_precision<T: Real>(pi: &GeneralizedPrecision<T>, eps: &DVector<T>) -> DVector<T> {
    let mut out = DVector::zeros(eps.len());
    let mut at = 0;
    for block in [&pi.meas, &pi.input_prior, &pi.proc] {
        let k = block.nrows();
        out.rows_mut(at, k).copy_from(&(block * eps.rows(at, k)));
        at += k;
    }
    out
}

/// `V_X = −ε̃_Xᵀ Π̃ ε̃`
pub fn free_energy_gradient<T: Real>(
    jacobian: &DMatrix<T>,
    pi: &GeneralizedPrecision<T>,
    eps: &DVector<T>,
) -> Result<DVector<T>> {
    check_len("prediction error", pi.dim(), eps.len())?;
    check_len("jacobian rows", eps.len(), jacobian.nrows())?;
    Ok(-(jacobian.transpose() * apply_precision(pi, eps)))
}

/// Constant matrices of the linear observer `Ẋ = A1 X + B1 [ỹ; −η̃]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverMatrices<T: Real> {
    pub a1: DMatrix<T>,
    pub b1: DMatrix<T>,
    /// `−V_XX`, the (constant) precision of the estimate.
    pub a2: DMatrix<T>,
    /// `blockdiag(D^x, D^v)`
    pub d_x: DMatrix<T>,
    pub pi: GeneralizedPrecision<T>,
    pub lifts: GeneralizedLifts<T>,
    pub k: T,
}

impl<T: Real> ObserverMatrices<T> {
    pub fn dim(&self) -> usize {
        self.a1.nrows()
    }

    /// Length of `[ỹ; −η̃]`.
    pub fn input_dim(&self) -> usize {
        self.b1.ncols()
    }

    pub fn jacobian(&self) -> DMatrix<T> {
        error_jacobian(&self.lifts)
    }

    /// `[ỹ; −η̃]`
    pub fn drive(&self, y_gen: &DVector<T>, eta_gen: &DVector<T>) -> Result<DVector<T>> {
        let (ny, nv) = (self.lifts.ny(), self.lifts.nv());
        check_len("generalized measurement", ny, y_gen.len())?;
        check_len("generalized prior", nv, eta_gen.len())?;
        let mut u = DVector::zeros(ny + nv);
        u.rows_mut(0, ny).copy_from(y_gen);
        u.rows_mut(ny, nv).copy_from(&(-eta_gen));
        Ok(u)
    }

    /// `A1 X + B1 u`
    pub fn velocity(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        &self.a1 * x + &self.b1 * u
    }

    pub fn free_energy_at(&self, x: &DVector<T>, y_gen: &DVector<T>, eta_gen: &DVector<T>) -> Result<T> {
        free_energy(&prediction_error(&self.lifts, x, y_gen, eta_gen)?, &self.pi)
    }

    /// Shift applied to `u` under the generalized hold: `D^y` on the
    /// measurement part, zero on the (constant) prior.
    fn drive_shift(&self) -> DMatrix<T> {
        let (ny, nv) = (self.lifts.ny(), self.lifts.nv());
        let mut du = DMatrix::zeros(ny + nv, ny + nv);
        du.view_mut((0, 0), (ny, ny))
            .copy_from(&shift_matrix(self.lifts.p, self.lifts.m));
        du
    }

    /// Precomputes the discrete update for a fixed sample interval.
    pub fn stepper(&self, dt: T, integrator: Integrator, hold: ObserverHold) -> ObserverStepper<T> {
        let (nx, nu) = (self.dim(), self.input_dim());
        match integrator {
            Integrator::Euler => ObserverStepper::Euler {
                a1: self.a1.clone(),
                b1: self.b1.clone(),
                dt,
            },
            Integrator::Exponential => {
                let extra = match hold {
                    ObserverHold::ZeroOrder => 0,
                    ObserverHold::Generalized => nu,
                };
                let size = nx + nu + extra;
                let mut aug = DMatrix::zeros(size, size);
                aug.view_mut((0, 0), (nx, nx)).copy_from(&self.a1);
                aug.view_mut((0, nx), (nx, nu)).copy_from(&self.b1);
                if extra > 0 {
                    aug.view_mut((nx, nx + nu), (nu, nu)).fill_with_identity();
                }
                let e = (aug * dt).exp();
                let phi = e.view((0, 0), (nx, nx)).into_owned();
                let gamma = e.view((0, nx), (nx, nu)).into_owned();
                let slope = (extra > 0).then(|| e.view((0, nx + nu), (nx, nu)) * self.drive_shift());
                ObserverStepper::Exponential { phi, gamma, slope }
            }
        }
    }
}

/// Builds the observer for `model` under `cfg` and checks the two
/// constructions of `A2` against each other.
pub fn assemble_observer<T: Real>(model: &LtiModel<T>, cfg: &DemConfig<T>) -> Result<ObserverMatrices<T>> {
    cfg.validate()?;
    check_len("process precision", model.n(), cfg.noise.proc_precision.nrows())?;
    check_len("measurement precision", model.m(), cfg.noise.meas_precision.nrows())?;
    check_len(
        "input prior precision",
        model.r(),
        cfg.noise.input_prior_precision.nrows(),
    )?;
    if !model.is_observable() {
        return Err(Error::InvalidParameter {
            name: "model",
            reason: "(A, C) is not observable".into(),
        });
    }
    let lifts = GeneralizedLifts::new(model, cfg.p, cfg.d);
    let pi = generalized_precision(&cfg.noise, cfg.p, cfg.d)?;
    let (nx, nv, ny) = (lifts.nx(), lifts.nv(), lifts.ny());
    let d_a = lifts.d_a();
    let pw_da = &pi.proc * &d_a;
    let pw_b = &pi.proc * &lifts.b;

    let mut a2 = DMatrix::zeros(nx + nv, nx + nv);
    a2.view_mut((0, 0), (nx, nx))
        .copy_from(&(lifts.c.transpose() * &pi.meas * &lifts.c + d_a.transpose() * &pw_da));
    let off = -(d_a.transpose() * &pw_b);
    a2.view_mut((0, nx), (nx, nv)).copy_from(&off);
    a2.view_mut((nx, 0), (nv, nx)).copy_from(&off.transpose());
    a2.view_mut((nx, nx), (nv, nv))
        .copy_from(&(&pi.input_prior + lifts.b.transpose() * &pw_b));

    let jac = error_jacobian(&lifts);
    let reference = jac.transpose() * pi.full() * &jac;
    let scale = reference.amax().max(T::one());
    let residual = to_f64((&a2 - &reference).amax() / scale);
    if !(residual <= ASSEMBLY_TOLERANCE) {
        return Err(Error::AssemblySelfCheck { residual });
    }

    let mut d_x = DMatrix::zeros(nx + nv, nx + nv);
    d_x.view_mut((0, 0), (nx, nx)).copy_from(&lifts.d_x);
    d_x.view_mut((nx, nx), (nv, nv)).copy_from(&lifts.d_v);

    let mut b1 = DMatrix::zeros(nx + nv, ny + nv);
    b1.view_mut((0, 0), (nx, ny))
        .copy_from(&(lifts.c.transpose() * &pi.meas * cfg.k));
    b1.view_mut((nx, ny), (nv, nv)).copy_from(&(&pi.input_prior * -cfg.k));

    let a1 = &d_x - &a2 * cfg.k;
    Ok(ObserverMatrices {
        a1,
        b1,
        a2,
        d_x,
        pi,
        lifts,
        k: cfg.k,
    })
}

/// Precomputed one-sample update.
#[derive(Debug, Clone, PartialEq)]
pub enum ObserverStepper<T: Real> {
    Exponential {
        phi: DMatrix<T>,
        gamma: DMatrix<T>,
        /// Response to the drive slope `D u`, under the generalized hold.
        slope: Option<DMatrix<T>>,
    },
    Euler {
        a1: DMatrix<T>,
        b1: DMatrix<T>,
        dt: T,
    },
}

impl<T: Real> ObserverStepper<T> {
    pub fn advance(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        match self {
            Self::Exponential { phi, gamma, slope } => {
                let mut next = phi * x + gamma * u;
                if let Some(s) = slope {
                    next += s * u;
                }
                next
            }
            Self::Euler { a1, b1, dt } => x + (a1 * x + b1 * u) * *dt,
        }
    }
}

/// One observer update from `x` driven by `ỹ` and `η̃`. `step` is only used
/// to label a divergence.
pub fn observer_step<T: Real>(
    matrices: &ObserverMatrices<T>,
    stepper: &ObserverStepper<T>,
    x: &DVector<T>,
    y_gen: &DVector<T>,
    eta_gen: &DVector<T>,
    step: usize,
) -> Result<DVector<T>> {
    check_len("stacked estimate", matrices.dim(), x.len())?;
    let u = matrices.drive(y_gen, eta_gen)?;
    let next = stepper.advance(x, &u);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { step });
    }
    Ok(next)
}

/// Estimate series produced by [`run_observer`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverRun<T: Real> {
    /// One stacked `X` per sample (rows are time).
    pub estimates: DMatrix<T>,
    /// `V(t)` at the recorded estimate.
    pub free_energy: Vec<T>,
    /// Embedded measurements `ỹ` per sample.
    pub y_gen: DMatrix<T>,
    pub eta_gen: DVector<T>,
    pub state_precision: DMatrix<T>,
    pub input_precision: DMatrix<T>,
    pub n: usize,
    pub p: usize,
    pub r: usize,
    pub d: usize,
}

impl<T: Real> ObserverRun<T> {
    pub fn len(&self) -> usize {
        self.estimates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn estimate(&self, k: usize) -> GeneralizedEstimate<T> {
        GeneralizedEstimate::from_stacked(&self.estimates.row(k).transpose(), self.n, self.p, self.r, self.d)
            .expect("run layout")
    }

    /// Estimated state `channel` (derivative block 0) over time.
    pub fn state_series(&self, channel: usize) -> Vec<T> {
        self.estimates.column(channel).iter().copied().collect()
    }

    /// Estimated input `channel` (derivative block 0) over time.
    pub fn input_series(&self, channel: usize) -> Vec<T> {
        let at = self.n * (self.p + 1) + channel;
        self.estimates.column(at).iter().copied().collect()
    }

    /// Estimated base states, one row per sample.
    pub fn states(&self) -> DMatrix<T> {
        self.estimates.columns(0, self.n).into_owned()
    }

    /// Estimated base inputs, one row per sample.
    pub fn inputs(&self) -> DMatrix<T> {
        self.estimates.columns(self.n * (self.p + 1), self.r).into_owned()
    }
}

/// Runs the observer over a full record.
///
/// With `known_inputs`, the input block of `X` is overwritten with the
/// embedded measured inputs before every step; otherwise inputs are
/// estimated under the prior `(η̃, P^v)`. The estimate recorded for sample
/// `i` is the one held when `ỹ_i` arrives; the step then uses `ỹ_i`.
pub fn run_observer<T: Real>(
    model: &LtiModel<T>,
    cfg: &DemConfig<T>,
    data: &ExperimentData<T>,
    known_inputs: bool,
) -> Result<ObserverRun<T>> {
    let matrices = assemble_observer(model, cfg)?;
    run_with_matrices(&matrices, cfg, data, known_inputs)
}

/// [`run_observer`] with matrices assembled beforehand.
pub fn run_with_matrices<T: Real>(
    matrices: &ObserverMatrices<T>,
    cfg: &DemConfig<T>,
    data: &ExperimentData<T>,
    known_inputs: bool,
) -> Result<ObserverRun<T>> {
    let lifts = &matrices.lifts;
    data.validate(cfg.p.max(cfg.d) + 1)?;
    check_len("measurement channels", lifts.m, data.measurements.ncols())?;
    check_len("input channels", lifts.r, data.inputs.ncols())?;
    let embedder = Embedder::new();
    let y_gen = embedder.embed_series(&data.measurements, cfg.p, data.dt)?;
    let v_gen = if known_inputs {
        Some(embedder.embed_series(&data.inputs, cfg.d, data.dt)?)
    } else {
        None
    };
    let eta_gen = cfg.generalized_prior().into_vector();
    let stepper = matrices.stepper(data.dt, cfg.integrator, cfg.hold);
    let (nx, nv) = (lifts.nx(), lifts.nv());
    let mut x = match &cfg.x0 {
        Some(x0) => {
            check_len("initial estimate", nx + nv, x0.len())?;
            x0.clone()
        }
        None => DVector::zeros(nx + nv),
    };
    let len = data.len();
    let mut estimates = DMatrix::zeros(len, nx + nv);
    let mut energy = Vec::with_capacity(len);
    for i in 0..len {
        if let Some(v) = &v_gen {
            x.rows_mut(nx, nv).copy_from(&v.row(i).transpose());
        }
        let y = y_gen.row(i).transpose();
        estimates.row_mut(i).copy_from(&x.transpose());
        energy.push(matrices.free_energy_at(&x, &y, &eta_gen)?);
        x = observer_step(matrices, &stepper, &x, &y, &eta_gen, i)?;
    }
    let (state_precision, input_precision) = estimate_precision(matrices);
    Ok(ObserverRun {
        estimates,
        free_energy: energy,
        y_gen,
        eta_gen,
        state_precision,
        input_precision,
        n: lifts.n,
        p: lifts.p,
        r: lifts.r,
        d: lifts.d,
    })
}

/// `(Π^x̃x̃, Π^ṽṽ)`: the diagonal blocks of `A2`.
pub fn estimate_precision<T: Real>(matrices: &ObserverMatrices<T>) -> (DMatrix<T>, DMatrix<T>) {
    let (nx, nv) = (matrices.lifts.nx(), matrices.lifts.nv());
    (
        matrices.a2.view((0, 0), (nx, nx)).into_owned(),
        matrices.a2.view((nx, nx), (nv, nv)).into_owned(),
    )
}

/// Free energy evaluated around an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape<T: Real> {
    pub center: T,
    /// `values[i][j]` is `V(X + magnitudes[j] · directions[i])`.
    pub values: Vec<Vec<T>>,
    pub max_probe: T,
    /// The center is at least every probe, up to the slack.
    pub is_peak: bool,
}

/// Evaluates `V` at `x_hat + m δ` for each unit direction `δ` and magnitude
/// `m`.
pub fn free_energy_landscape<T: Real>(
    matrices: &ObserverMatrices<T>,
    x_hat: &DVector<T>,
    y_gen: &DVector<T>,
    eta_gen: &DVector<T>,
    directions: &[DVector<T>],
    magnitudes: &[T],
    slack: T,
) -> Result<Landscape<T>> {
    let center = matrices.free_energy_at(x_hat, y_gen, eta_gen)?;
    let mut values = Vec::with_capacity(directions.len());
    let mut max_probe = T::min_value().unwrap_or(-T::one() / T::default_epsilon());
    for dir in directions {
        check_len("perturbation direction", x_hat.len(), dir.len())?;
        let mut row = Vec::with_capacity(magnitudes.len());
        for &m in magnitudes {
            let v = matrices.free_energy_at(&(x_hat + dir * m), y_gen, eta_gen)?;
            max_probe = max_probe.max(v);
            row.push(v);
        }
        values.push(row);
    }
    let is_peak = values.is_empty() || center + slack >= max_probe;
    Ok(Landscape {
        center,
        values,
        max_probe,
        is_peak,
    })
}

/// `count` random unit vectors of length `dim` supported on
/// `[start, start + len)`.
pub fn random_directions<T: Real>(seed: u64, dim: usize, start: usize, len: usize, count: usize) -> Vec<DVector<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v = DVector::<T>::zeros(dim);
            for i in start..(start + len).min(dim) {
                let z: f64 = StandardNormal.sample(&mut rng);
                v[i] = lit(z);
            }
            let norm = v.norm();
            if norm > T::zero() {
                v /= norm;
            }
            v
        })
        .collect()
}

/// Eigenvalues `(re, im)` of a general square matrix through a real Schur
/// decomposition of the matrix scaled to unit max-norm.
pub fn eigenvalues<T: Real>(m: &DMatrix<T>) -> Option<Vec<(T, T)>> {
    let scale = m.amax();
    if scale == T::zero() {
        return Some(vec![(T::zero(), T::zero()); m.nrows()]);
    }
    let schur = Schur::try_new(m / scale, lit(1e-14), 100_000)?;
    Some(
        schur
            .complex_eigenvalues()
            .iter()
            .map(|z| (z.re * scale, z.im * scale))
            .collect(),
    )
}

/// Eigenvalue real parts of `A1` for each learning rate, slowest first.
pub fn learning_rate_sweep<T: Real>(model: &LtiModel<T>, cfg: &DemConfig<T>, rates: &[T]) -> Result<Vec<(T, Vec<T>)>> {
    rates
        .iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.k = k;
            let m = assemble_observer(model, &c)?;
            let mut re: Vec<T> = eigenvalues(&m.a1)
                .ok_or(Error::InvalidParameter {
                    name: "k",
                    reason: "eigenvalues of A1 did not converge".into(),
                })?
                .into_iter()
                .map(|(re, _)| re)
                .collect();
            re.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            Ok((k, re))
        })
        .collect()
}
