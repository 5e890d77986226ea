//! JSON experiment configuration: schema, validation and hashing.

use std::path::{Path, PathBuf};

use dem_core::dem::{DemConfig, Integrator, ObserverHold};
use dem_core::gencoord::MAX_EMBEDDING_ORDER;
use dem_core::noise::NoiseSpec;
use dem_core::systems::{quadrotor_roll_model, LtiModel, RollOutput, ROLL_INERTIA_XX, ROLL_THRUST_COEFF};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FieldError, HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Roll-plant state channels.
pub const STATE_DIM: usize = 2;
/// Motor command channels.
pub const INPUT_DIM: usize = 4;
/// Sign of each motor in the roll command pattern.
pub const ROLL_PATTERN: [f64; INPUT_DIM] = [1.0, -1.0, -1.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub model: ModelConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub dem: DemSection,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub data: DataSource,
    /// Leading seconds excluded from every error metric.
    #[serde(default = "default_skip")]
    pub transient_skip: f64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    BenchmarkState {
        #[serde(default = "default_ar_order")]
        ar_order: usize,
    },
    SweepP {
        #[serde(default = "default_p_values")]
        p_values: Vec<usize>,
        #[serde(default = "default_d")]
        d: usize,
    },
    Landscape {
        #[serde(default = "default_sample_times")]
        sample_times: usize,
        #[serde(default = "default_probes")]
        probes: usize,
        #[serde(default = "default_magnitudes")]
        magnitudes: Vec<f64>,
        /// Points per axis of the emitted `(φ, φ̇)` surface grid.
        #[serde(default = "default_grid_points")]
        grid_points: usize,
        #[serde(default = "default_grid_span")]
        grid_span: [f64; STATE_DIM],
    },
    InputBenchmark {
        #[serde(default = "default_uio_pole")]
        uio_pole: f64,
        #[serde(default = "default_uio_order")]
        uio_derivative_order: usize,
    },
    PriorSweep {
        #[serde(default = "default_prior_grid")]
        precisions: Vec<f64>,
    },
    NoiseCharacterization {
        cases: Vec<NoiseCase>,
        #[serde(default = "default_bins")]
        bins: usize,
        #[serde(default)]
        max_lag: Option<usize>,
    },
}

impl ExperimentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentSpec::BenchmarkState { .. } => "benchmark_state",
            ExperimentSpec::SweepP { .. } => "sweep_p",
            ExperimentSpec::Landscape { .. } => "landscape",
            ExperimentSpec::InputBenchmark { .. } => "input_benchmark",
            ExperimentSpec::PriorSweep { .. } => "prior_sweep",
            ExperimentSpec::NoiseCharacterization { .. } => "noise_characterization",
        }
    }
}

/// Experiment families with a one-line description each.
pub const EXPERIMENT_KINDS: [(&str, &str); 6] = [
    (
        "benchmark_state",
        "state SSE of DEM, KF, SA and SMIKF on roll-model data",
    ),
    ("sweep_p", "DEM state SSE across embedding orders"),
    ("landscape", "free energy around converged DEM estimates"),
    ("input_benchmark", "input SSE of DEM and the unknown input observer"),
    ("prior_sweep", "DEM input SSE across input prior precisions"),
    ("noise_characterization", "residual process noise statistics"),
];

/// One noise regime of a characterization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseCase {
    pub label: String,
    pub process: NoiseMatrix,
    #[serde(default)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    #[default]
    Angle,
    FullState,
}

impl From<OutputKind> for RollOutput {
    fn from(o: OutputKind) -> Self {
        match o {
            OutputKind::Angle => RollOutput::Angle,
            OutputKind::FullState => RollOutput::FullState,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_inertia")]
    pub inertia_xx: f64,
    #[serde(default = "default_thrust")]
    pub thrust_coeff: f64,
    #[serde(default)]
    pub output: OutputKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            inertia_xx: ROLL_INERTIA_XX,
            thrust_coeff: ROLL_THRUST_COEFF,
            output: OutputKind::Angle,
        }
    }
}

/// Diagonal entries or a full square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matrix {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl Matrix {
    pub fn dim(&self) -> usize {
        match self {
            Matrix::Diagonal(d) => d.len(),
            Matrix::Full(rows) => rows.len(),
        }
    }

    fn check(&self, field: &str, dim: usize, errors: &mut Vec<FieldError>) -> bool {
        let ok_shape = match self {
            Matrix::Diagonal(d) => d.len() == dim,
            Matrix::Full(rows) => rows.len() == dim && rows.iter().all(|r| r.len() == dim),
        };
        if !ok_shape {
            errors.push(FieldError::new(
                field,
                format!("expected a {dim}x{dim} matrix or {dim} diagonal entries"),
            ));
            return false;
        }
        let finite = match self {
            Matrix::Diagonal(d) => d.iter().all(|v| v.is_finite()),
            Matrix::Full(rows) => rows.iter().flatten().all(|v| v.is_finite()),
        };
        if !finite {
            errors.push(FieldError::new(field, "entries must be finite"));
        }
        finite
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        match self {
            Matrix::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            Matrix::Full(rows) => DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j]),
        }
    }
}

/// A noise level given either as covariance or as precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseMatrix {
    Covariance(Matrix),
    Precision(Matrix),
}

impl NoiseMatrix {
    fn raw(&self) -> &Matrix {
        match self {
            NoiseMatrix::Covariance(m) | NoiseMatrix::Precision(m) => m,
        }
    }

    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        match self {
            NoiseMatrix::Covariance(m) => Some(m.to_dmatrix()),
            NoiseMatrix::Precision(m) => m.to_dmatrix().try_inverse(),
        }
    }

    pub fn precision(&self) -> Option<DMatrix<f64>> {
        match self {
            NoiseMatrix::Covariance(m) => m.to_dmatrix().try_inverse(),
            NoiseMatrix::Precision(m) => Some(m.to_dmatrix()),
        }
    }

    fn check(&self, field: &str, dim: usize, errors: &mut Vec<FieldError>) {
        if self.raw().check(field, dim, errors) {
            let m = self.raw().to_dmatrix();
            let sym = (&m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
            if !sym || m.clone().cholesky().is_none() {
                errors.push(FieldError::new(field, "must be symmetric positive definite"));
            }
        }
    }
}

/// Noise of the synthetic plant. The measurement noise is given per
/// state channel; the output sees `C z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub process: NoiseMatrix,
    pub measurement: NoiseMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    #[default]
    Exponential,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldKind {
    #[default]
    Generalized,
    ZeroOrder,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPrior {
    /// Prior input mean; zero when empty.
    #[serde(default)]
    pub mean: Vec<f64>,
    /// Prior precision; identity when absent.
    #[serde(default)]
    pub precision: Option<Matrix>,
}

/// Observer settings. Precisions default to the inverse of the plant's
/// noise covariances and `sigma` to the plant's smoothness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemSection {
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub process: Option<NoiseMatrix>,
    /// In output space.
    #[serde(default)]
    pub measurement: Option<NoiseMatrix>,
    #[serde(default)]
    pub input_prior: InputPrior,
    #[serde(default)]
    pub integrator: IntegratorKind,
    #[serde(default)]
    pub hold: HoldKind,
}

impl Default for DemSection {
    fn default() -> Self {
        Self {
            p: default_p(),
            d: default_d(),
            k: default_k(),
            sigma: None,
            process: None,
            measurement: None,
            input_prior: InputPrior::default(),
            integrator: IntegratorKind::default(),
            hold: HoldKind::default(),
        }
    }
}

/// Sum-of-sinusoids roll command `u(t)` applied as `u(t) · [1, -1, -1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSignal {
    #[serde(default = "default_components")]
    pub components: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_min_freq")]
    pub min_freq: f64,
    #[serde(default = "default_max_freq")]
    pub max_freq: f64,
}

impl Default for InputSignal {
    fn default() -> Self {
        Self {
            components: default_components(),
            amplitude: default_amplitude(),
            min_freq: default_min_freq(),
            max_freq: default_max_freq(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default = "default_dt")]
        dt: f64,
        #[serde(default = "default_samples")]
        samples: usize,
        /// Drop both noise sources while keeping the configured levels
        /// for the estimators.
        #[serde(default)]
        noiseless: bool,
        #[serde(default)]
        input: InputSignal,
    },
    Log {
        path: PathBuf,
        #[serde(default)]
        normalize_inputs: bool,
    },
}

fn default_skip() -> f64 {
    dem_core::benchmarks::DEFAULT_TRANSIENT_SKIP
}
fn default_ar_order() -> usize {
    6
}
fn default_p_values() -> Vec<usize> {
    (0..=6).collect()
}
fn default_p() -> usize {
    6
}
fn default_d() -> usize {
    2
}
fn default_k() -> f64 {
    dem_core::dem::DEFAULT_LEARNING_RATE
}
fn default_sample_times() -> usize {
    10
}
fn default_probes() -> usize {
    100
}
fn default_magnitudes() -> Vec<f64> {
    vec![0.1]
}
fn default_grid_points() -> usize {
    21
}
fn default_grid_span() -> [f64; STATE_DIM] {
    [0.1, 0.1]
}
fn default_uio_pole() -> f64 {
    20.0
}
fn default_uio_order() -> usize {
    6
}
fn default_prior_grid() -> Vec<f64> {
    (-2..=6).map(|e| 10f64.powi(e)).collect()
}
fn default_bins() -> usize {
    40
}
fn default_inertia() -> f64 {
    ROLL_INERTIA_XX
}
fn default_thrust() -> f64 {
    ROLL_THRUST_COEFF
}
fn default_components() -> usize {
    3
}
fn default_amplitude() -> f64 {
    0.15
}
fn default_min_freq() -> f64 {
    0.1
}
fn default_max_freq() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    0.0083
}
fn default_samples() -> usize {
    1205
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Parses and validates.
    pub fn load_validated(path: impl AsRef<Path>) -> Result<Self> {
        let cfg = Self::load(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn kind(&self) -> &'static str {
        self.experiment.kind()
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self.data, DataSource::Synthetic { .. })
    }

    /// Synthetic data generated without process or measurement noise.
    pub fn is_noiseless(&self) -> bool {
        matches!(self.data, DataSource::Synthetic { noiseless: true, .. })
    }

    /// Sample interval of synthetic data; `None` for logs.
    pub fn synthetic_dt(&self) -> Option<f64> {
        match self.data {
            DataSource::Synthetic { dt, .. } => Some(dt),
            DataSource::Log { .. } => None,
        }
    }

    /// Seeds to run: the configured list for synthetic data, a single
    /// placeholder `0` for a log.
    pub fn run_seeds(&self) -> Vec<u64> {
        if self.is_synthetic() {
            self.seeds.clone()
        } else {
            vec![0]
        }
    }

    /// SHA-256 of the canonical config with the fields that do not change
    /// results (name, seeds, output directory) removed, first 16 hex digits.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            for key in ["name", "seeds", "output_dir"] {
                obj.remove(key);
            }
        }
        let digest = Sha256::digest(serde_json::to_string(&value).expect("value serializes").as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.field_errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(errors))
        }
    }

    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut e = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            e.push(FieldError::new(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        if self.output_dir.as_os_str().is_empty() {
            e.push(FieldError::new("output_dir", "must not be empty"));
        }
        if self.is_synthetic() {
            if self.seeds.is_empty() {
                e.push(FieldError::new(
                    "seeds",
                    "must list at least one seed for synthetic data",
                ));
            }
            let mut sorted = self.seeds.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.seeds.len() {
                e.push(FieldError::new("seeds", "must not repeat"));
            }
        }
        if !(self.transient_skip >= 0.0 && self.transient_skip.is_finite()) {
            e.push(FieldError::new(
                "transient_skip",
                "must be a non-negative number of seconds",
            ));
        }
        self.check_model(&mut e);
        self.check_noise(&mut e);
        self.check_dem(&mut e);
        self.check_data(&mut e);
        self.check_experiment(&mut e);
        e
    }

    fn check_model(&self, e: &mut Vec<FieldError>) {
        for (field, v) in [
            ("model.inertia_xx", self.model.inertia_xx),
            ("model.thrust_coeff", self.model.thrust_coeff),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                e.push(FieldError::new(field, "must be positive"));
            }
        }
    }

    fn check_noise(&self, e: &mut Vec<FieldError>) {
        if !(self.noise.sigma > 0.0 && self.noise.sigma.is_finite()) {
            e.push(FieldError::new("noise.sigma", "must be positive"));
        }
        self.noise.process.check("noise.process", STATE_DIM, e);
        self.noise.measurement.check("noise.measurement", STATE_DIM, e);
    }

    fn check_dem(&self, e: &mut Vec<FieldError>) {
        let dem = &self.dem;
        let orders: Vec<usize> = match &self.experiment {
            ExperimentSpec::SweepP { p_values, d } => {
                let mut o = p_values.clone();
                o.push(*d);
                o
            }
            _ => vec![dem.p, dem.d],
        };
        if orders.iter().any(|&o| o > MAX_EMBEDDING_ORDER) {
            e.push(FieldError::new(
                "dem.p",
                format!("embedding orders must not exceed {MAX_EMBEDDING_ORDER}"),
            ));
        }
        if !(dem.k >= 0.0 && dem.k.is_finite()) {
            e.push(FieldError::new("dem.k", "must be a non-negative learning rate"));
        }
        if let Some(s) = dem.sigma {
            if !(s > 0.0 && s.is_finite()) {
                e.push(FieldError::new("dem.sigma", "must be positive"));
            }
        }
        if let Some(p) = &dem.process {
            p.check("dem.process", STATE_DIM, e);
        }
        if let Some(m) = &dem.measurement {
            m.check("dem.measurement", self.output_dim(), e);
        }
        let prior = &dem.input_prior;
        if !prior.mean.is_empty() && prior.mean.len() != INPUT_DIM {
            e.push(FieldError::new(
                "dem.input_prior.mean",
                format!("expected {INPUT_DIM} entries"),
            ));
        }
        if prior.mean.iter().any(|v| !v.is_finite()) {
            e.push(FieldError::new("dem.input_prior.mean", "entries must be finite"));
        }
        if let Some(p) = &prior.precision {
            if p.check("dem.input_prior.precision", INPUT_DIM, e) {
                let m = p.to_dmatrix();
                let sym = (&m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
                if !sym || m.symmetric_eigenvalues().min() < -1e-12 * m.amax().max(1.0) {
                    e.push(FieldError::new(
                        "dem.input_prior.precision",
                        "must be symmetric positive semidefinite",
                    ));
                }
            }
        }
    }

    fn check_data(&self, e: &mut Vec<FieldError>) {
        match &self.data {
            DataSource::Synthetic { dt, samples, input, .. } => {
                if !(*dt > 0.0 && dt.is_finite()) {
                    e.push(FieldError::new("data.dt", "must be positive"));
                }
                let needed = self.max_order() + 2;
                if *samples < needed {
                    e.push(FieldError::new(
                        "data.samples",
                        format!("need at least {needed} samples"),
                    ));
                } else if *dt > 0.0 && self.transient_skip >= (*samples - 1) as f64 * dt {
                    e.push(FieldError::new("transient_skip", "must be shorter than the record"));
                }
                if !(input.amplitude >= 0.0 && input.amplitude.is_finite()) {
                    e.push(FieldError::new("data.input.amplitude", "must be non-negative"));
                }
                if !(input.min_freq >= 0.0 && input.max_freq > input.min_freq && input.max_freq.is_finite()) {
                    e.push(FieldError::new("data.input", "need 0 <= min_freq < max_freq"));
                }
            }
            DataSource::Log { path, .. } => {
                if !path.is_file() {
                    e.push(FieldError::new(
                        "data.path",
                        format!("no such file: {}", path.display()),
                    ));
                }
            }
        }
    }

    fn check_experiment(&self, e: &mut Vec<FieldError>) {
        match &self.experiment {
            ExperimentSpec::BenchmarkState { ar_order } => {
                if *ar_order == 0 {
                    e.push(FieldError::new("experiment.ar_order", "must be at least 1"));
                }
            }
            ExperimentSpec::SweepP { p_values, .. } => {
                if p_values.is_empty() {
                    e.push(FieldError::new("experiment.p_values", "must not be empty"));
                }
            }
            ExperimentSpec::Landscape {
                sample_times,
                probes,
                magnitudes,
                grid_points,
                grid_span,
            } => {
                if *sample_times == 0 {
                    e.push(FieldError::new("experiment.sample_times", "must be at least 1"));
                }
                if *probes == 0 {
                    e.push(FieldError::new("experiment.probes", "must be at least 1"));
                }
                if magnitudes.is_empty() || magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                    e.push(FieldError::new(
                        "experiment.magnitudes",
                        "need at least one non-negative magnitude",
                    ));
                }
                if *grid_points == 1 {
                    e.push(FieldError::new(
                        "experiment.grid_points",
                        "use 0 to disable the grid or at least 2",
                    ));
                }
                if grid_span.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    e.push(FieldError::new("experiment.grid_span", "must be non-negative"));
                }
            }
            ExperimentSpec::InputBenchmark {
                uio_pole,
                uio_derivative_order,
            } => {
                if !(*uio_pole > 0.0 && uio_pole.is_finite()) {
                    e.push(FieldError::new("experiment.uio_pole", "must be positive"));
                }
                if *uio_derivative_order == 0 || *uio_derivative_order > MAX_EMBEDDING_ORDER {
                    e.push(FieldError::new(
                        "experiment.uio_derivative_order",
                        format!("must lie in 1..={MAX_EMBEDDING_ORDER}"),
                    ));
                }
            }
            ExperimentSpec::PriorSweep { precisions } => {
                if precisions.is_empty() || precisions.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    e.push(FieldError::new(
                        "experiment.precisions",
                        "need at least one non-negative precision",
                    ));
                }
            }
            ExperimentSpec::NoiseCharacterization { cases, bins, .. } => {
                if cases.is_empty() {
                    e.push(FieldError::new("experiment.cases", "must not be empty"));
                }
                let mut labels: Vec<&str> = cases.iter().map(|c| c.label.as_str()).collect();
                labels.sort_unstable();
                labels.dedup();
                if labels.len() != cases.len() {
                    e.push(FieldError::new("experiment.cases", "labels must be unique"));
                }
                for (i, c) in cases.iter().enumerate() {
                    c.process.check(&format!("experiment.cases[{i}].process"), STATE_DIM, e);
                    if let Some(s) = c.sigma {
                        if !(s > 0.0 && s.is_finite()) {
                            e.push(FieldError::new(
                                format!("experiment.cases[{i}].sigma"),
                                "must be positive",
                            ));
                        }
                    }
                }
                if *bins == 0 {
                    e.push(FieldError::new("experiment.bins", "must be at least 1"));
                }
            }
        }
    }

    fn max_order(&self) -> usize {
        match &self.experiment {
            ExperimentSpec::SweepP { p_values, d } => p_values.iter().copied().max().unwrap_or(0).max(*d),
            ExperimentSpec::InputBenchmark {
                uio_derivative_order, ..
            } => self.dem.p.max(self.dem.d).max(*uio_derivative_order),
            _ => self.dem.p.max(self.dem.d),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.model.output {
            OutputKind::Angle => 1,
            OutputKind::FullState => STATE_DIM,
        }
    }

    pub fn model(&self) -> Result<LtiModel<f64>> {
        Ok(quadrotor_roll_model(
            self.model.inertia_xx,
            self.model.thrust_coeff,
            self.model.output.into(),
        )?)
    }

    /// The plant with every state measured, used to generate data.
    pub fn full_state_model(&self) -> Result<LtiModel<f64>> {
        Ok(quadrotor_roll_model(
            self.model.inertia_xx,
            self.model.thrust_coeff,
            RollOutput::FullState,
        )?)
    }

    /// Plant process covariance.
    pub fn process_covariance(&self) -> DMatrix<f64> {
        self.noise.process.covariance().expect("validated covariance")
    }

    /// Plant measurement covariance per state channel.
    pub fn state_measurement_covariance(&self) -> DMatrix<f64> {
        self.noise.measurement.covariance().expect("validated covariance")
    }

    /// Measurement covariance seen by the output, `C Σ Cᵀ`.
    pub fn output_measurement_covariance(&self, model: &LtiModel<f64>) -> DMatrix<f64> {
        &model.c * self.state_measurement_covariance() * model.c.transpose()
    }

    /// Prior input mean, zero when not configured.
    pub fn prior_mean(&self) -> DVector<f64> {
        if self.dem.input_prior.mean.is_empty() {
            DVector::zeros(INPUT_DIM)
        } else {
            DVector::from_column_slice(&self.dem.input_prior.mean)
        }
    }

    pub fn prior_precision(&self) -> DMatrix<f64> {
        self.dem
            .input_prior
            .precision
            .as_ref()
            .map(Matrix::to_dmatrix)
            .unwrap_or_else(|| DMatrix::identity(INPUT_DIM, INPUT_DIM))
    }

    /// Observer configuration for embedding orders `(p, d)` at interval `dt`.
    pub fn dem_config(&self, model: &LtiModel<f64>, p: usize, d: usize, dt: f64) -> Result<DemConfig<f64>> {
        let proc = match &self.dem.process {
            Some(m) => m.precision(),
            None => self.noise.process.precision(),
        }
        .expect("validated precision");
        let meas = match &self.dem.measurement {
            Some(m) => m.precision().expect("validated precision"),
            None => self
                .output_measurement_covariance(model)
                .try_inverse()
                .ok_or(dem_core::Error::NotDefinite {
                    name: "output measurement covariance",
                    property: "invertible",
                })?,
        };
        let sigma = self.dem.sigma.unwrap_or(self.noise.sigma);
        let noise = NoiseSpec::new(sigma, proc, meas, self.prior_precision())?;
        let integrator = match self.dem.integrator {
            IntegratorKind::Exponential => Integrator::Exponential,
            IntegratorKind::Euler => Integrator::Euler,
        };
        let hold = match self.dem.hold {
            HoldKind::Generalized => ObserverHold::Generalized,
            HoldKind::ZeroOrder => ObserverHold::ZeroOrder,
        };
        Ok(DemConfig::new(p, d, self.dem.k, noise, self.prior_mean(), dt)?
            .with_integrator(integrator)
            .with_hold(hold))
    }
}
