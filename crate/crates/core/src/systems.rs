//! Linear time-invariant plants: the quadrotor roll model, discretization,
//! simulation under injected noise, input normalization and flight-log I/O.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Roll-axis moment of inertia of the test quadrotor (kg·m²).
pub const ROLL_INERTIA_XX: f64 = 3.4e-3;
/// Roll thrust coefficient mapping PWM to torque (N·m).
pub const ROLL_THRUST_COEFF: f64 = 1.274e-3;

/// `ẋ = A x + B v + w`, `y = C x + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
}

impl<T: Real> LtiModel<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || n == 0 {
            return Err(Error::Dimension {
                context: "A must be square",
                expected: n,
                actual: a.ncols(),
            });
        }
        if b.nrows() != n {
            return Err(Error::Dimension {
                context: "B rows",
                expected: n,
                actual: b.nrows(),
            });
        }
        if c.ncols() != n {
            return Err(Error::Dimension {
                context: "C columns",
                expected: n,
                actual: c.ncols(),
            });
        }
        Ok(Self { a, b, c })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn r(&self) -> usize {
        self.b.ncols()
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    /// Same dynamics observed through a different output matrix.
    pub fn with_output(&self, c: DMatrix<T>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), c)
    }

    /// Rescales input columns after normalization: if `v_norm = scale · v`,
    /// the B column is divided by `scale` so `B v` is unchanged.
    pub fn with_input_scale(&self, scale: &[T]) -> Result<Self> {
        if scale.len() != self.r() {
            return Err(Error::Dimension {
                context: "input scale factors",
                expected: self.r(),
                actual: scale.len(),
            });
        }
        let mut b = self.b.clone();
        for (j, s) in scale.iter().enumerate() {
            b.column_mut(j).unscale_mut(*s);
        }
        Self::new(self.a.clone(), b, self.c.clone())
    }

    /// `[C; CA; ...; CA^(n-1)]`
    pub fn observability_matrix(&self) -> DMatrix<T> {
        let (n, m) = (self.n(), self.m());
        let mut out = DMatrix::zeros(n * m, n);
        let mut block = self.c.clone();
        for i in 0..n {
            out.view_mut((i * m, 0), (m, n)).copy_from(&block);
            block = &block * &self.a;
        }
        out
    }

    /// `[B, AB, ..., A^(n-1) B]`
    pub fn controllability_matrix(&self) -> DMatrix<T> {
        let (n, r) = (self.n(), self.r());
        let mut out = DMatrix::zeros(n, n * r);
        let mut block = self.b.clone();
        for i in 0..n {
            out.view_mut((0, i * r), (n, r)).copy_from(&block);
            block = &self.a * &block;
        }
        out
    }

    pub fn is_observable(&self) -> bool {
        self.observability_matrix().rank(lit(1e-9)) == self.n()
    }

    pub fn is_controllable(&self) -> bool {
        self.controllability_matrix().rank(lit(1e-9)) == self.n()
    }
}

/// Which roll-model outputs are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RollOutput {
    /// `C = [1, 0]`: roll angle only.
    Angle,
    /// `C = I₂`: angle and rate.
    FullState,
}

/// Small-angle roll dynamics with states `[φ, φ̇]` and four PWM inputs.
pub fn quadrotor_roll_model<T: Real>(i_xx: T, c_b_phi: T, output: RollOutput) -> Result<LtiModel<T>> {
    if !(i_xx > T::zero()) || !(c_b_phi > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "i_xx/c_b_phi",
            reason: "must be positive".into(),
        });
    }
    let g = c_b_phi / i_xx;
    let a = DMatrix::from_row_slice(2, 2, &[T::zero(), T::one(), T::zero(), T::zero()]);
    let z = T::zero();
    let b = DMatrix::from_row_slice(2, 4, &[z, z, z, z, g, -g, -g, g]);
    let c = match output {
        RollOutput::Angle => DMatrix::from_row_slice(1, 2, &[T::one(), T::zero()]),
        RollOutput::FullState => DMatrix::identity(2, 2),
    };
    LtiModel::new(a, b, c)
}

/// How the input is interpolated between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputHold {
    /// Piecewise constant.
    #[default]
    ZeroOrder,
    /// Piecewise linear between consecutive samples.
    FirstOrder,
}

/// Time-aligned measurement, input and (optionally) ground-truth series.
/// Every matrix stores one time step per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData<T: Real> {
    pub dt: T,
    pub measurements: DMatrix<T>,
    pub inputs: DMatrix<T>,
    pub truth_states: Option<DMatrix<T>>,
    pub truth_inputs: Option<DMatrix<T>>,
    /// Direct full-state measurements, when the recording has them.
    pub measured_states: Option<DMatrix<T>>,
    pub measurement_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub input_hold: InputHold,
    /// Per-channel factors applied by [`normalize_inputs`], if any.
    pub input_scale: Option<Vec<T>>,
}

impl<T: Real> ExperimentData<T> {
    pub fn len(&self) -> usize {
        self.measurements.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> T {
        from_usize::<T>(self.len().saturating_sub(1)) * self.dt
    }

    pub fn validate(&self, min_len: usize) -> Result<()> {
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "must be positive".into(),
            });
        }
        let len = self.len();
        if len < min_len {
            return Err(Error::TooShort {
                needed: min_len,
                actual: len,
            });
        }
        let lengths = [
            Some(self.inputs.nrows()),
            self.truth_states.as_ref().map(|m| m.nrows()),
            self.truth_inputs.as_ref().map(|m| m.nrows()),
            self.measured_states.as_ref().map(|m| m.nrows()),
        ];
        for l in lengths.into_iter().flatten() {
            if l != len {
                return Err(Error::Dimension {
                    context: "experiment series length",
                    expected: len,
                    actual: l,
                });
            }
        }
        Ok(())
    }

    /// Replaces the measurements with `measured_states · Cᵀ`, i.e. what an
    /// output matrix `c` that selects state channels would have seen.
    pub fn observe_through(mut self, c: &DMatrix<T>) -> Result<Self> {
        let states = self
            .measured_states
            .as_ref()
            .ok_or(Error::MissingStates("observe_through needs measured states"))?;
        if c.ncols() != states.ncols() {
            return Err(Error::Dimension {
                context: "output matrix columns",
                expected: states.ncols(),
                actual: c.ncols(),
            });
        }
        self.measurements = states * c.transpose();
        self.measurement_labels = (0..c.nrows()).map(|i| format!("y{i}")).collect();
        Ok(self)
    }

    /// One state channel as a plain vector.
    pub fn truth_channel(&self, channel: usize) -> Option<Vec<T>> {
        self.truth_states
            .as_ref()
            .map(|m| m.column(channel).iter().copied().collect())
    }
}

/// Per-channel normalization `(v - mean) / (max - min)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputNormalization<T: Real> {
    pub normalized: DMatrix<T>,
    /// `1 / (max - min)` per channel.
    pub scale: Vec<T>,
    pub mean: Vec<T>,
}

pub fn normalize_inputs<T: Real>(series: &DMatrix<T>) -> Result<InputNormalization<T>> {
    let (len, r) = series.shape();
    if len == 0 {
        return Err(Error::TooShort { needed: 1, actual: 0 });
    }
    let mut normalized = series.clone();
    let mut scale = Vec::with_capacity(r);
    let mut mean = Vec::with_capacity(r);
    for j in 0..r {
        let col = series.column(j);
        let (lo, hi) = (col.min(), col.max());
        if !(hi > lo) {
            return Err(Error::DegenerateRange { channel: j });
        }
        let mu = col.sum() / from_usize(len);
        let s = T::one() / (hi - lo);
        normalized.column_mut(j).apply(|v| *v = (*v - mu) * s);
        scale.push(s);
        mean.push(mu);
    }
    Ok(InputNormalization {
        normalized,
        scale,
        mean,
    })
}

/// Zero-order-hold discretization `(Ad, Bd)` from the exponential of
/// `[[A, B], [0, 0]] dt`.
pub fn discretize<T: Real>(model: &LtiModel<T>, dt: T) -> (DMatrix<T>, DMatrix<T>) {
    let (n, r) = (model.n(), model.r());
    let mut aug = DMatrix::zeros(n + r, n + r);
    aug.view_mut((0, 0), (n, n)).copy_from(&model.a);
    aug.view_mut((0, n), (n, r)).copy_from(&model.b);
    let e = (aug * dt).exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, r)).into_owned())
}

/// First-order-hold discretization: over one step with
/// `v(τ) = v_k + τ v̇_k`, `x_{k+1} = Ad x_k + G0 v_k + G1 v̇_k`.
pub fn discretize_foh<T: Real>(model: &LtiModel<T>, dt: T) -> (DMatrix<T>, DMatrix<T>, DMatrix<T>) {
    let (n, r) = (model.n(), model.r());
    let mut aug = DMatrix::zeros(n + 2 * r, n + 2 * r);
    aug.view_mut((0, 0), (n, n)).copy_from(&model.a);
    aug.view_mut((0, n), (n, r)).copy_from(&model.b);
    aug.view_mut((n, n + r), (r, r)).fill_with_identity();
    let e = (aug * dt).exp();
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, r)).into_owned(),
        e.view((0, n + r), (n, r)).into_owned(),
    )
}

/// Input contribution to each transition `k → k+1` (length `T - 1`),
/// consistent with the hold the series was generated or recorded under.
pub fn input_drive<T: Real>(model: &LtiModel<T>, dt: T, inputs: &DMatrix<T>, hold: InputHold) -> Vec<DVector<T>> {
    let len = inputs.nrows();
    let v = |k: usize| inputs.row(k).transpose();
    match hold {
        InputHold::ZeroOrder => {
            let (_, bd) = discretize(model, dt);
            (0..len.saturating_sub(1)).map(|k| &bd * v(k)).collect()
        }
        InputHold::FirstOrder => {
            let (_, g0, g1) = discretize_foh(model, dt);
            (0..len.saturating_sub(1))
                .map(|k| {
                    let slope = (v(k + 1) - v(k)) / dt;
                    &g0 * v(k) + &g1 * slope
                })
                .collect()
        }
    }
}

/// Simulates `n_steps` samples of the plant.
///
/// `x_{k+1} = Ad x_k + drive_k + w_k dt` and `y_k = C x_k + z_k`, where the
/// drive follows `hold`. Process noise is a continuous-time rate, hence
/// the `dt` factor.
#[allow(clippy::too_many_arguments)]
pub fn simulate<T: Real>(
    model: &LtiModel<T>,
    dt: T,
    n_steps: usize,
    inputs: &DMatrix<T>,
    proc_noise: &DMatrix<T>,
    meas_noise: &DMatrix<T>,
    x0: &DVector<T>,
    hold: InputHold,
) -> Result<ExperimentData<T>> {
    let (n, r, m) = (model.n(), model.r(), model.m());
    let check = |context, expected, actual| {
        if expected != actual {
            Err(Error::Dimension {
                context,
                expected,
                actual,
            })
        } else {
            Ok(())
        }
    };
    check("input channels", r, inputs.ncols())?;
    check("process noise channels", n, proc_noise.ncols())?;
    check("measurement noise channels", m, meas_noise.ncols())?;
    check("initial state", n, x0.len())?;
    for (context, rows) in [
        ("input length", inputs.nrows()),
        ("process noise length", proc_noise.nrows()),
        ("measurement noise length", meas_noise.nrows()),
    ] {
        if rows < n_steps {
            return Err(Error::Dimension {
                context,
                expected: n_steps,
                actual: rows,
            });
        }
    }
    let inputs = inputs.rows(0, n_steps).into_owned();
    let (ad, _) = discretize(model, dt);
    let drive = input_drive(model, dt, &inputs, hold);

    let mut states = DMatrix::zeros(n_steps, n);
    let mut x = x0.clone();
    for k in 0..n_steps {
        states.row_mut(k).copy_from(&x.transpose());
        if k + 1 < n_steps {
            let w = proc_noise.row(k).transpose();
            x = &ad * &x + &drive[k] + w * dt;
        }
    }
    let measurements = &states * model.c.transpose() + meas_noise.rows(0, n_steps);
    Ok(ExperimentData {
        dt,
        measurements,
        truth_inputs: Some(inputs.clone()),
        inputs,
        truth_states: Some(states),
        measured_states: None,
        measurement_labels: (0..m).map(|i| format!("y{i}")).collect(),
        input_labels: (0..r).map(|i| format!("v{i}")).collect(),
        input_hold: hold,
        input_scale: None,
    })
}

/// Empirical process noise `w_k = (x_{k+1} - Ad x_k - drive_k) / dt`,
/// one row per transition.
pub fn residual_process_noise<T: Real>(model: &LtiModel<T>, data: &ExperimentData<T>) -> Result<DMatrix<T>> {
    let states = data
        .truth_states
        .as_ref()
        .or(data.measured_states.as_ref())
        .ok_or(Error::MissingStates("residual process noise needs state series"))?;
    if states.ncols() != model.n() {
        return Err(Error::Dimension {
            context: "state series channels",
            expected: model.n(),
            actual: states.ncols(),
        });
    }
    let len = states.nrows();
    if len < 2 {
        return Err(Error::TooShort { needed: 2, actual: len });
    }
    let (ad, _) = discretize(model, data.dt);
    let drive = input_drive(model, data.dt, &data.inputs, data.input_hold);
    let mut out = DMatrix::zeros(len - 1, model.n());
    for k in 0..len - 1 {
        let x = states.row(k).transpose();
        let next = states.row(k + 1).transpose();
        let w = (next - &ad * x - &drive[k]) / data.dt;
        out.row_mut(k).copy_from(&w.transpose());
    }
    Ok(out)
}

const LOG_REQUIRED: [&str; 7] = ["t", "phi", "phidot", "pwm1", "pwm2", "pwm3", "pwm4"];
const LOG_TRUTH: [&str; 2] = ["phi_true", "phidot_true"];
/// Allowed relative deviation of any sample interval from the nominal one.
pub const LOG_JITTER_TOLERANCE: f64 = 0.01;

/// Options applied while ingesting a flight log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogOptions {
    pub output: RollOutput,
    pub normalize_inputs: bool,
}

impl Default for LogOptions {
    fn default() -> Self {
        Self {
            output: RollOutput::Angle,
            normalize_inputs: false,
        }
    }
}

/// Reads a roll-experiment CSV log (`t,phi,phidot,pwm1..pwm4` plus optional
/// `phi_true,phidot_true`).
pub fn load_flight_log(path: impl AsRef<Path>, options: LogOptions) -> Result<ExperimentData<f64>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_flight_log(&text, options)
}

/// Parses the flight-log CSV format. Row numbers in errors are file line
/// numbers (the header is line 1).
pub fn parse_flight_log(text: &str, options: LogOptions) -> Result<ExperimentData<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| headers.iter().position(|h| h == name);
    let mut required = [0usize; 7];
    for (slot, name) in required.iter_mut().zip(LOG_REQUIRED) {
        *slot = index_of(name).ok_or_else(|| Error::Schema {
            column: name.to_string(),
        })?;
    }
    let truth_cols = match (index_of(LOG_TRUTH[0]), index_of(LOG_TRUTH[1])) {
        (Some(a), Some(b)) => Some([a, b]),
        _ => None,
    };

    let mut time = Vec::new();
    let mut states = Vec::new();
    let mut pwm = Vec::new();
    let mut truth = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let cell = |col: usize| -> Result<f64> {
            let raw = record.get(col).ok_or_else(|| Error::LogRow {
                row,
                reason: format!("missing cell in column {}", &headers[col]),
            })?;
            let value: f64 = raw.parse().map_err(|_| Error::LogRow {
                row,
                reason: format!("cannot parse `{raw}` in column {}", &headers[col]),
            })?;
            if !value.is_finite() {
                return Err(Error::LogRow {
                    row,
                    reason: format!("non-finite value in column {}", &headers[col]),
                });
            }
            Ok(value)
        };
        time.push(cell(required[0])?);
        states.extend([cell(required[1])?, cell(required[2])?]);
        for &col in &required[3..] {
            pwm.push(cell(col)?);
        }
        if let Some(cols) = truth_cols {
            truth.extend([cell(cols[0])?, cell(cols[1])?]);
        }
    }
    let len = time.len();
    if len < 2 {
        return Err(Error::TooShort { needed: 2, actual: len });
    }
    for k in 1..len {
        if !(time[k] > time[k - 1]) {
            return Err(Error::LogRow {
                row: k + 2,
                reason: "timestamps are not strictly increasing".into(),
            });
        }
    }
    let dt = (time[len - 1] - time[0]) / (len - 1) as f64;
    let mut intervals: Vec<f64> = time.windows(2).map(|w| w[1] - w[0]).collect();
    intervals.sort_by(f64::total_cmp);
    let nominal = intervals[intervals.len() / 2];
    for k in 1..len {
        let step = time[k] - time[k - 1];
        if (step - nominal).abs() > LOG_JITTER_TOLERANCE * nominal {
            return Err(Error::LogRow {
                row: k + 2,
                reason: format!("sample interval {step} deviates from nominal {nominal} by more than 1%"),
            });
        }
    }

    let measured_states = DMatrix::from_row_slice(len, 2, &states);
    let mut inputs = DMatrix::from_row_slice(len, 4, &pwm);
    let mut input_scale = None;
    if options.normalize_inputs {
        let norm = normalize_inputs(&inputs)?;
        inputs = norm.normalized;
        input_scale = Some(norm.scale);
    }
    let c = match options.output {
        RollOutput::Angle => DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        RollOutput::FullState => DMatrix::identity(2, 2),
    };
    let data = ExperimentData {
        dt,
        measurements: DMatrix::zeros(len, 0),
        inputs,
        truth_states: truth_cols.map(|_| DMatrix::from_row_slice(len, 2, &truth)),
        truth_inputs: None,
        measured_states: Some(measured_states),
        measurement_labels: Vec::new(),
        input_labels: LOG_REQUIRED[3..].iter().map(|s| s.to_string()).collect(),
        input_hold: InputHold::ZeroOrder,
        input_scale,
    };
    let mut data = data.observe_through(&c)?;
    data.measurement_labels = match options.output {
        RollOutput::Angle => vec!["phi".into()],
        RollOutput::FullState => vec!["phi".into(), "phidot".into()],
    };
    Ok(data)
}

/// Writes `data` in the flight-log CSV format. Needs measured full states
/// (`phi`, `phidot`) and four input channels; truth columns are written
/// when present. Values use the shortest round-trip representation.
pub fn write_flight_log<T: Real, W: Write>(data: &ExperimentData<T>, out: W) -> Result<()> {
    let states = data
        .measured_states
        .as_ref()
        .ok_or(Error::MissingStates("flight log needs measured phi/phidot"))?;
    if states.ncols() != 2 || data.inputs.ncols() != 4 {
        return Err(Error::Log("flight logs hold 2 states and 4 pwm channels".into()));
    }
    let mut writer = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = LOG_REQUIRED.to_vec();
    if data.truth_states.is_some() {
        header.extend(LOG_TRUTH);
    }
    writer.write_record(&header)?;
    for k in 0..data.len() {
        let t = k as f64 * to_f64(data.dt);
        let mut row = vec![t.to_string()];
        row.extend(states.row(k).iter().map(|v| to_f64(*v).to_string()));
        row.extend(data.inputs.row(k).iter().map(|v| to_f64(*v).to_string()));
        if let Some(truth) = &data.truth_states {
            row.extend(truth.row(k).iter().map(|v| to_f64(*v).to_string()));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_flight_log<T: Real>(data: &ExperimentData<T>, path: impl AsRef<Path>) -> Result<()> {
    write_flight_log(data, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn double_integrator() -> LtiModel<f64> {
        LtiModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn roll_model_structure() {
        let model = quadrotor_roll_model(ROLL_INERTIA_XX, ROLL_THRUST_COEFF, RollOutput::Angle).unwrap();
        assert_eq!(model.a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let g = 0.374_705_882_352_941_2;
        assert_relative_eq!(model.b[(1, 0)], g, epsilon = 1e-15);
        assert_relative_eq!(model.b[(1, 1)], -g, epsilon = 1e-15);
        assert_relative_eq!(model.b[(1, 2)], -g, epsilon = 1e-15);
        assert_relative_eq!(model.b[(1, 3)], g, epsilon = 1e-15);
        assert!(model.b.row(0).iter().all(|v| *v == 0.0));
        assert_eq!(model.observability_matrix().rank(1e-12), 2);
        assert!(model.is_observable());
        assert!(model.is_controllable());
        let full = quadrotor_roll_model(2.0, 1.0, RollOutput::FullState).unwrap();
        assert_eq!(full.c, DMatrix::identity(2, 2));
        assert_eq!(full.a, model.a);
    }

    #[test]
    fn roll_model_rejects_nonpositive() {
        assert!(quadrotor_roll_model(0.0, 1.0, RollOutput::Angle).is_err());
    }

    #[test]
    fn normalization_examples() {
        let series = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let out = normalize_inputs(&series).unwrap();
        assert_eq!(out.normalized.as_slice(), &[-0.5, 0.0, 0.5]);
        assert_eq!(out.scale, vec![0.5]);
        let sym = DMatrix::from_column_slice(2, 1, &[-0.5, 0.5]);
        assert_eq!(normalize_inputs(&sym).unwrap().normalized, sym);
        let flat = DMatrix::from_column_slice(3, 1, &[5.0, 5.0, 5.0]);
        assert!(matches!(
            normalize_inputs(&flat),
            Err(Error::DegenerateRange { channel: 0 })
        ));
    }

    #[test]
    fn input_rescaling_preserves_drive() {
        let model = quadrotor_roll_model(ROLL_INERTIA_XX, ROLL_THRUST_COEFF, RollOutput::Angle).unwrap();
        let raw = DMatrix::from_fn(5, 4, |k, j| 1000.0 + (k * 7 + j * 3) as f64);
        let norm = normalize_inputs(&raw).unwrap();
        let scaled = model.with_input_scale(&norm.scale).unwrap();
        for k in 0..5 {
            let v = raw.row(k).transpose() - DVector::from_vec(norm.mean.clone());
            let lhs = &model.b * v;
            let rhs = &scaled.b * norm.normalized.row(k).transpose();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn discretize_examples() {
        let zero = LtiModel::new(
            DMatrix::zeros(3, 3),
            DMatrix::from_element(3, 2, 1.5),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let (ad, bd) = discretize(&zero, 0.2);
        assert_relative_eq!(ad, DMatrix::identity(3, 3), epsilon = 1e-15);
        assert_relative_eq!(bd, DMatrix::from_element(3, 2, 0.3), epsilon = 1e-15);

        let (ad, bd) = discretize(&double_integrator(), 0.1);
        assert_relative_eq!(
            ad,
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            epsilon = 1e-14
        );
        assert_relative_eq!(bd, DMatrix::from_row_slice(2, 1, &[0.005, 0.1]), epsilon = 1e-14);
    }

    #[test]
    fn discretize_small_step_is_second_order() {
        let model = LtiModel::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -3.0, -0.5]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let err = |dt: f64| {
            let (ad, _) = discretize(&model, dt);
            (ad - DMatrix::identity(2, 2) - &model.a * dt).norm()
        };
        let ratio = err(1e-3) / err(5e-4);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn two_half_steps_equal_one_full_step() {
        let model = double_integrator();
        let (ad1, bd1) = discretize(&model, 0.05);
        let (ad2, bd2) = discretize(&model, 0.1);
        assert_relative_eq!(&ad1 * &ad1, ad2, epsilon = 1e-15);
        assert_relative_eq!(&ad1 * &bd1 + &bd1, bd2, epsilon = 1e-15);
    }

    #[test]
    fn simulate_zero_everything() {
        let model = double_integrator();
        let n = 50;
        let data = simulate(
            &model,
            0.01,
            n,
            &DMatrix::zeros(n, 1),
            &DMatrix::zeros(n, 2),
            &DMatrix::zeros(n, 1),
            &DVector::zeros(2),
            InputHold::ZeroOrder,
        )
        .unwrap();
        assert!(data.truth_states.unwrap().iter().all(|v| *v == 0.0));
        assert!(data.measurements.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn simulate_constant_input_parabola() {
        let model = double_integrator();
        let (n, dt) = (200, 0.01);
        let data = simulate(
            &model,
            dt,
            n,
            &DMatrix::from_element(n, 1, 1.0),
            &DMatrix::zeros(n, 2),
            &DMatrix::zeros(n, 1),
            &DVector::zeros(2),
            InputHold::ZeroOrder,
        )
        .unwrap();
        for k in 0..n {
            let t = k as f64 * dt;
            assert!((data.measurements[(k, 0)] - t * t / 2.0).abs() < 10.0 * dt);
        }
    }

    #[test]
    fn simulate_dimension_errors() {
        let model = double_integrator();
        let res = simulate(
            &model,
            0.01,
            10,
            &DMatrix::zeros(10, 2),
            &DMatrix::zeros(10, 2),
            &DMatrix::zeros(10, 1),
            &DVector::zeros(2),
            InputHold::ZeroOrder,
        );
        assert!(matches!(res, Err(Error::Dimension { .. })));
    }

    #[test]
    fn residuals_recover_injected_noise() {
        let model = quadrotor_roll_model(ROLL_INERTIA_XX, ROLL_THRUST_COEFF, RollOutput::Angle).unwrap();
        let n = 300;
        let dt = 0.0083;
        let w =
            crate::noise::generate_colored_noise(5, 0.05, &DMatrix::from_diagonal_element(2, 2, 0.01), n, dt).unwrap();
        let v = DMatrix::from_fn(n, 4, |k, j| ((k as f64) * 0.05 + j as f64).sin());
        for hold in [InputHold::ZeroOrder, InputHold::FirstOrder] {
            let data = simulate(&model, dt, n, &v, &w, &DMatrix::zeros(n, 1), &DVector::zeros(2), hold).unwrap();
            let res = residual_process_noise(&model, &data).unwrap();
            for k in 0..n - 1 {
                for c in 0..2 {
                    let truth = w[(k, c)];
                    assert!((res[(k, c)] - truth).abs() <= 1e-8 * truth.abs().max(1e-3) + 1e-9);
                }
            }
        }
        let clean = simulate(
            &model,
            dt,
            n,
            &v,
            &DMatrix::zeros(n, 2),
            &DMatrix::zeros(n, 1),
            &DVector::zeros(2),
            InputHold::ZeroOrder,
        )
        .unwrap();
        let res = residual_process_noise(&model, &clean).unwrap();
        assert!(res.amax() < 1e-9);
    }

    #[test]
    fn residuals_need_two_samples() {
        let model = double_integrator();
        let data = simulate(
            &model,
            0.1,
            1,
            &DMatrix::zeros(1, 1),
            &DMatrix::zeros(1, 2),
            &DMatrix::zeros(1, 1),
            &DVector::zeros(2),
            InputHold::ZeroOrder,
        )
        .unwrap();
        assert!(matches!(
            residual_process_noise(&model, &data),
            Err(Error::TooShort { .. })
        ));
    }

    fn log_text(rows: usize, gap_at: Option<usize>) -> String {
        let mut s = String::from("t,phi,phidot,pwm1,pwm2,pwm3,pwm4\n");
        let mut t = 0.0;
        for k in 0..rows {
            if k > 0 {
                t += if Some(k) == gap_at { 3.0 / 120.0 } else { 1.0 / 120.0 };
            }
            s.push_str(&format!(
                "{t},{},{},{},{},{},{}\n",
                0.01 * k as f64,
                0.1,
                1200 + k % 7,
                1300 + k % 2,
                1250 + k % 5,
                1210 + k % 3
            ));
        }
        s
    }

    #[test]
    fn parse_well_formed_log() {
        let data = parse_flight_log(&log_text(1200, None), LogOptions::default()).unwrap();
        assert_eq!(data.len(), 1200);
        assert!((data.dt - 0.0083).abs() < 5e-5);
        assert_eq!(data.measurements.ncols(), 1);
        assert!(data.truth_states.is_none());
        assert_eq!(data.inputs[(3, 0)], 1203.0);
    }

    #[test]
    fn parse_rejects_missing_column_and_gaps() {
        let text = log_text(10, None).replacen("pwm3", "pwmX", 1);
        match parse_flight_log(&text, LogOptions::default()) {
            Err(Error::Schema { column }) => assert_eq!(column, "pwm3"),
            other => panic!("expected schema error, got {other:?}"),
        }
        match parse_flight_log(&log_text(50, Some(20)), LogOptions::default()) {
            Err(Error::LogRow { row, .. }) => assert_eq!(row, 22),
            other => panic!("expected jitter error, got {other:?}"),
        }
        let nan = log_text(10, None).replacen("0.1,", "NaN,", 1);
        assert!(matches!(
            parse_flight_log(&nan, LogOptions::default()),
            Err(Error::LogRow { row: 2, .. })
        ));
        let backwards = "t,phi,phidot,pwm1,pwm2,pwm3,pwm4\n0.0,0,0,1,2,3,4\n0.1,0,0,1,2,3,4\n0.05,0,0,1,2,3,4\n";
        assert!(matches!(
            parse_flight_log(backwards, LogOptions::default()),
            Err(Error::LogRow { row: 4, .. })
        ));
    }

    #[test]
    fn parse_normalizes_on_request() {
        let opts = LogOptions {
            output: RollOutput::FullState,
            normalize_inputs: true,
        };
        let data = parse_flight_log(&log_text(100, None), opts).unwrap();
        assert_eq!(data.measurements.ncols(), 2);
        let col = data.inputs.column(0);
        assert_relative_eq!(col.max() - col.min(), 1.0, epsilon = 1e-12);
        assert!(data.input_scale.is_some());
    }
}
