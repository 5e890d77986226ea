//! Generalized coordinates of motion.
//!
//! A generalized vector stacks a quantity with its first `order` time
//! derivatives, `[x; x'; x''; ...]`, each derivative occupying one
//! contiguous block of `base_dim` entries. This module builds the shift
//! operator acting on such vectors, the block-diagonal lifts of system
//! matrices, and the Taylor construction that turns a window of discrete
//! samples into a generalized output.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{from_i64, from_usize, to_f64, Real};

/// Largest supported embedding order. Factorials and Vandermonde
/// conditioning degrade quickly past this.
pub const MAX_EMBEDDING_ORDER: usize = 12;

/// Condition number of the sample-offset matrix above which a warning is logged.
pub const CONDITION_WARNING: f64 = 1e12;

/// A quantity and its first `order` derivatives, stacked block by block.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedVector<T: Real> {
    base_dim: usize,
    order: usize,
    data: DVector<T>,
}

impl<T: Real> GeneralizedVector<T> {
    pub fn new(base_dim: usize, order: usize, data: DVector<T>) -> Result<Self> {
        if base_dim == 0 {
            return Err(Error::InvalidParameter {
                name: "base_dim",
                reason: "must be positive".into(),
            });
        }
        let expected = base_dim * (order + 1);
        if data.len() != expected {
            return Err(Error::Dimension {
                context: "generalized vector",
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { base_dim, order, data })
    }

    pub fn zeros(base_dim: usize, order: usize) -> Self {
        Self {
            base_dim,
            order,
            data: DVector::zeros(base_dim * (order + 1)),
        }
    }

    /// Builds a generalized vector whose base block is `value` and whose
    /// derivative blocks are zero (the generalized form of a constant).
    pub fn constant(value: &DVector<T>, order: usize) -> Self {
        let mut out = Self::zeros(value.len().max(1), order);
        out.data.rows_mut(0, value.len()).copy_from(value);
        out
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// The `j`-th derivative block.
    pub fn block(&self, j: usize) -> DVector<T> {
        self.data.rows(j * self.base_dim, self.base_dim).into_owned()
    }

    pub fn as_vector(&self) -> &DVector<T> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<T> {
        self.data
    }
}

/// Derivative operator on generalized vectors: the `(order+1)`-square
/// superdiagonal-ones matrix Kronecker `I_base_dim`.
pub fn shift_matrix<T: Real>(order: usize, base_dim: usize) -> DMatrix<T> {
    let size = base_dim * (order + 1);
    let mut d = DMatrix::zeros(size, size);
    for block in 0..order {
        for i in 0..base_dim {
            d[(block * base_dim + i, (block + 1) * base_dim + i)] = T::one();
        }
    }
    d
}

/// `I_{order+1} ⊗ m`.
pub fn lift_matrix<T: Real>(m: &DMatrix<T>, order: usize) -> DMatrix<T> {
    lift_matrix_rect(m, order, order)
}

/// `I_{(row_order+1)×(col_order+1)} ⊗ m`, the rectangular lift used when
/// the row and column quantities are embedded to different orders. Blocks
/// beyond `min(row_order, col_order)` on the diagonal are zero.
pub fn lift_matrix_rect<T: Real>(m: &DMatrix<T>, row_order: usize, col_order: usize) -> DMatrix<T> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(r * (row_order + 1), c * (col_order + 1));
    for j in 0..=row_order.min(col_order) {
        out.view_mut((j * r, j * c), (r, c)).copy_from(m);
    }
    out
}

/// Sample offsets (in units of `dt`) of a window centered on the nominal
/// time: `-ceil(p/2) ..= p - ceil(p/2)`. For odd `p` the extra sample sits
/// in the past.
pub fn centered_offsets(order: usize) -> Vec<i64> {
    let lead = order.div_ceil(2) as i64;
    (0..=order as i64).map(|k| k - lead).collect()
}

/// Taylor matrix for a centered window: `T[k][j] = (k dt)^j / j!`.
pub fn taylor_embedding_matrix<T: Real>(order: usize, dt: T) -> DMatrix<T> {
    taylor_matrix(&centered_offsets(order), dt)
}

/// Taylor matrix for arbitrary integer sample offsets.
pub fn taylor_matrix<T: Real>(offsets: &[i64], dt: T) -> DMatrix<T> {
    let cols = offsets.len();
    DMatrix::from_fn(offsets.len(), cols, |row, j| {
        let tau = from_i64::<T>(offsets[row]) * dt;
        tau.powi(j as i32) / factorial::<T>(j)
    })
}

pub(crate) fn factorial<T: Real>(j: usize) -> T {
    (1..=j).fold(T::one(), |acc, i| acc * from_usize::<T>(i))
}

/// `order + 1` uniformly spaced samples centered on the estimation time.
#[derive(Debug, Clone)]
pub struct EmbeddingWindow<T: Real> {
    pub samples: Vec<DVector<T>>,
    pub dt: T,
    pub order: usize,
}

impl<T: Real> EmbeddingWindow<T> {
    pub fn new(samples: Vec<DVector<T>>, dt: T, order: usize) -> Result<Self> {
        if samples.len() != order + 1 {
            return Err(Error::WindowSize {
                expected: order + 1,
                actual: samples.len(),
            });
        }
        Ok(Self { samples, dt, order })
    }
}

/// Generalized output at the center of `window`; exact for signals that
/// are polynomials of degree `<= order` across the window.
pub fn embed_measurements<T: Real>(window: &EmbeddingWindow<T>) -> Result<GeneralizedVector<T>> {
    if window.samples.len() != window.order + 1 {
        return Err(Error::WindowSize {
            expected: window.order + 1,
            actual: window.samples.len(),
        });
    }
    let inv = inverse_taylor(&centered_offsets(window.order), window.dt)?;
    let m = window.samples[0].len();
    let mut stacked = DMatrix::zeros(window.order + 1, m);
    for (k, s) in window.samples.iter().enumerate() {
        if s.len() != m {
            return Err(Error::Dimension {
                context: "embedding window sample",
                expected: m,
                actual: s.len(),
            });
        }
        stacked.row_mut(k).copy_from(&s.transpose());
    }
    GeneralizedVector::new(m, window.order, flatten_blocks(&(inv * stacked)))
}

/// Row-major flattening of a `(order+1) × m` derivative table into the
/// block layout of a generalized vector.
fn flatten_blocks<T: Real>(blocks: &DMatrix<T>) -> DVector<T> {
    let (rows, m) = blocks.shape();
    DVector::from_fn(rows * m, |i, _| blocks[(i / m, i % m)])
}

/// Inverse of the Taylor matrix for `offsets`, computed in scaled form:
/// `T = V diag(dt^j / j!)` with `V[k][j] = k^j`, so
/// `T^-1 = diag(j! / dt^j) V^-1` and only the integer node matrix is
/// factorized.
fn inverse_taylor<T: Real>(offsets: &[i64], dt: T) -> Result<DMatrix<T>> {
    let order = offsets.len() - 1;
    if order > MAX_EMBEDDING_ORDER {
        return Err(Error::OrderCap {
            order,
            max: MAX_EMBEDDING_ORDER,
        });
    }
    if dt <= T::zero() {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: "must be positive".into(),
        });
    }
    let nodes = DMatrix::from_fn(order + 1, order + 1, |k, j| from_i64::<T>(offsets[k]).powi(j as i32));
    let sv = nodes.clone().singular_values();
    let cond = to_f64(sv.max()) / to_f64(sv.min());
    if !(cond < CONDITION_WARNING) {
        log::warn!("embedding node matrix for order {order} has condition number {cond:e}");
    }
    let node_inv = nodes.lu().try_inverse().ok_or(Error::NotDefinite {
        name: "taylor node matrix",
        property: "invertible",
    })?;
    let mut inv = node_inv;
    for j in 0..=order {
        let scale = factorial::<T>(j) / dt.powi(j as i32);
        inv.row_mut(j).scale_mut(scale);
    }
    Ok(inv)
}

type CacheKey = (usize, i64, u64);

/// Embeds whole measurement series, caching one inverse Taylor matrix per
/// `(order, first offset, dt)`.
///
/// The cache is behind a `RwLock`; concurrent lookups share the read lock
/// and racing inserts of the same key write identical values.
#[derive(Debug, Default)]
pub struct Embedder<T: Real> {
    cache: RwLock<HashMap<CacheKey, Arc<DMatrix<T>>>>,
}

impl<T: Real> Embedder<T> {
    pub fn new() -> Self {
        Self {
            cache: RwLock::new(HashMap::new()),
        }
    }

    fn inverse(&self, order: usize, first_offset: i64, dt: T) -> Result<Arc<DMatrix<T>>> {
        let key = (order, first_offset, to_f64(dt).to_bits());
        if let Some(hit) = self.cache.read().expect("embedder cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let offsets: Vec<i64> = (0..=order as i64).map(|k| first_offset + k).collect();
        let inv = Arc::new(inverse_taylor(&offsets, dt)?);
        let mut cache = self.cache.write().expect("embedder cache poisoned");
        Ok(Arc::clone(cache.entry(key).or_insert(inv)))
    }

    /// Number of cached factorizations.
    pub fn cached(&self) -> usize {
        self.cache.read().expect("embedder cache poisoned").len()
    }

    /// Generalized values for every row of `series` (rows are time steps).
    ///
    /// Returns a `T × m(order+1)` matrix whose row `k` is the flattened
    /// generalized vector at sample `k`. Near the ends of the record the
    /// window slides inward so that it stays inside the data, and the
    /// derivatives are evaluated at the true sample time through an
    /// off-center Taylor matrix.
    pub fn embed_series(&self, series: &DMatrix<T>, order: usize, dt: T) -> Result<DMatrix<T>> {
        let (len, m) = series.shape();
        if len < order + 1 {
            return Err(Error::TooShort {
                needed: order + 1,
                actual: len,
            });
        }
        let lead = order.div_ceil(2);
        let mut out = DMatrix::zeros(len, m * (order + 1));
        for k in 0..len {
            let start = k.saturating_sub(lead).min(len - order - 1);
            let inv = self.inverse(order, start as i64 - k as i64, dt)?;
            let window = series.rows(start, order + 1);
            let blocks = &*inv * window;
            for j in 0..=order {
                for c in 0..m {
                    out[(k, j * m + c)] = blocks[(j, c)];
                }
            }
        }
        Ok(out)
    }
}
