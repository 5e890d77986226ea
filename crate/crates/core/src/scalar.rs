//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating-point scalar the estimators are generic over (`f32` or `f64`).
///
/// `RealField` supplies the algebra nalgebra needs; `ToPrimitive` is used
/// where a value has to leave the generic world (RNG draws, special
/// functions, cache keys).
pub trait Real: RealField + Copy + ToPrimitive + Display + Debug {}

impl<T> Real for T where T: RealField + Copy + ToPrimitive + Display + Debug {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Converts a working scalar back to `f64`.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub(crate) fn from_usize<T: Real>(x: usize) -> T {
    nalgebra::convert(x as f64)
}

#[inline]
pub(crate) fn from_i64<T: Real>(x: i64) -> T {
    nalgebra::convert(x as f64)
}
