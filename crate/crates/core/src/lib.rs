//! Dynamic Expectation Maximization (DEM) state and input estimation for
//! linear plants driven by temporally colored noise, with generalized
//! coordinates, colored-noise tooling, plant models and baseline filters.
//!
//! The numerical core is generic over [`Real`]; `f64` aliases are exported
//! at the crate root for convenience.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod dem;
pub mod error;
pub mod gencoord;
pub mod noise;
pub mod scalar;
pub mod systems;

pub use benchmarks::{ArModel, KalmanOutput, KalmanSystem, UioConfig, UioOutput};
pub use dem::{DemConfig, GeneralizedEstimate, GeneralizedLifts, ObserverMatrices, ObserverRun};
pub use error::{Error, Result};
pub use gencoord::{Embedder, EmbeddingWindow, GeneralizedVector};
pub use noise::{GeneralizedPrecision, NoiseSpec};
pub use scalar::Real;
pub use systems::{ExperimentData, InputHold, LtiModel, RollOutput};

pub type GeneralizedVectorF64 = GeneralizedVector<f64>;
pub type NoiseSpecF64 = NoiseSpec<f64>;
pub type LtiModelF64 = LtiModel<f64>;
pub type ExperimentDataF64 = ExperimentData<f64>;
pub type DemConfigF64 = DemConfig<f64>;
pub type ObserverMatricesF64 = ObserverMatrices<f64>;
pub type ObserverRunF64 = ObserverRun<f64>;
pub type ArModelF64 = ArModel<f64>;
