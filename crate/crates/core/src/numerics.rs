//! Dense and sparse vector primitives.
//!
//! Every accumulation runs left to right in `f64`; sums are
//! bit-reproducible between runs.

use crate::error::{Error, Result};

/// A dense, fixed-length vector of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    /// Builds a vector from raw values, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("dense vector entry {pos}")));
        }
        Ok(Self(values))
    }

    /// Wraps values without the finiteness check. Used for intermediate
    /// results the caller has already validated or will validate.
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        check_dims(self.len(), other.len())?;
        Ok(dot_slices(&self.0, &other.0))
    }

    /// Returns `self * s`.
    pub fn scaled(&self, s: f64) -> DenseVector {
        DenseVector(self.0.iter().map(|v| v * s).collect())
    }

    /// Returns `self - other`.
    pub fn sub(&self, other: &DenseVector) -> Result<DenseVector> {
        check_dims(self.len(), other.len())?;
        Ok(DenseVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// `self += alpha * x` in place.
    pub fn axpy_in_place(&mut self, alpha: f64, x: &DenseVector) -> Result<()> {
        check_dims(x.len(), self.len())?;
        for (yi, xi) in self.0.iter_mut().zip(&x.0) {
            *yi += alpha * xi;
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

/// A sparse vector with strictly increasing 0-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    pub fn new(indices: Vec<usize>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "sparse vector has {} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidArgument(format!(
                    "sparse indices not strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::InvalidArgument(format!(
                    "sparse index {last} out of range for dimension {dim}"
                )));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sparse vector value {pos}")));
        }
        Ok(Self {
            indices,
            values,
            dim,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    /// Stores every entry of a dense slice, zeros included.
    pub fn from_dense(values: &[f64]) -> Result<Self> {
        Self::new((0..values.len()).collect(), values.to_vec(), values.len())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn dot(&self, b: &DenseVector) -> Result<f64> {
        check_dims(self.dim, b.len())?;
        Ok(self.dot_unchecked(b.as_slice()))
    }

    /// Dot product against a slice already known to have length `dim`.
    #[inline]
    pub(crate) fn dot_unchecked(&self, b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            acc += v * b[i];
        }
        acc
    }

    /// `acc += s * self`, for `acc` of length `dim`.
    #[inline]
    pub(crate) fn scatter_scaled(&self, s: f64, acc: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            acc[i] += s * v;
        }
    }

    /// Same entries, larger logical dimension.
    pub(crate) fn with_dim(mut self, dim: usize) -> Result<Self> {
        if let Some(&last) = self.indices.last() {
            if last >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: last + 1,
                });
            }
        }
        self.dim = dim;
        Ok(self)
    }

    /// Appends an entry past the current dimension, growing it by one.
    pub(crate) fn push_trailing(&mut self, value: f64) {
        self.indices.push(self.dim);
        self.values.push(value);
        self.dim += 1;
    }
}

/// Either storage layout, both dotted against a dense vector.
pub trait Features {
    fn dim(&self) -> usize;
    fn dot_dense(&self, b: &DenseVector) -> Result<f64>;
}

impl Features for SparseVector {
    fn dim(&self) -> usize {
        self.dim
    }
    fn dot_dense(&self, b: &DenseVector) -> Result<f64> {
        self.dot(b)
    }
}

impl Features for DenseVector {
    fn dim(&self) -> usize {
        self.len()
    }
    fn dot_dense(&self, b: &DenseVector) -> Result<f64> {
        self.dot(b)
    }
}

pub fn dot<A: Features + ?Sized>(a: &A, b: &DenseVector) -> Result<f64> {
    a.dot_dense(b)
}

/// Returns `y + alpha * x`; inputs are left untouched.
pub fn axpy(alpha: f64, x: &DenseVector, y: &DenseVector) -> Result<DenseVector> {
    let mut out = y.clone();
    out.axpy_in_place(alpha, x)?;
    Ok(out)
}

pub fn norm2(x: &DenseVector) -> f64 {
    dot_slices(x.as_slice(), x.as_slice()).sqrt()
}

#[inline]
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}
