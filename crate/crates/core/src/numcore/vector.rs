//! Flat parameter vectors and the handful of BLAS-1 style operations the
//! optimizers need.
//!
//! All reductions run strictly left to right so that results are
//! bit-reproducible regardless of how the vector was produced.

use std::ops::Index;

use crate::error::{Error, Result};

/// Norms below this are treated as zero by every normalizing operation.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// A point in parameter space, or a gradient living in the same space.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    /// Wraps `values` without the finiteness check. Callers must check
    /// with [`ParamVector::is_finite`] before handing the vector out.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, other: &ParamVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// Inner product with a fixed left-to-right reduction order.
    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(dot_unchecked(&self.0, &other.0))
    }

    pub fn sq_norm(&self) -> f64 {
        dot_unchecked(&self.0, &self.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    /// Returns `a * x + self`.
    pub fn axpy(&self, a: f64, x: &ParamVector) -> Result<ParamVector> {
        axpy(a, x, self)
    }

    /// `self += a * x`, in place.
    pub fn axpy_mut(&mut self, a: f64, x: &ParamVector) -> Result<()> {
        self.check_dim(x)?;
        for (y, &xi) in self.0.iter_mut().zip(&x.0) {
            *y += a * xi;
        }
        Ok(())
    }

    pub fn scale(&self, a: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| a * v).collect())
    }

    /// Returns `self - other`.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_dim(other)?;
        Ok(ParamVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Returns `self + other`.
    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_dim(other)?;
        Ok(ParamVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    /// Euclidean distance, `‖self − other‖`.
    pub fn distance(&self, other: &ParamVector) -> Result<f64> {
        self.check_dim(other)?;
        let mut acc = 0.0;
        for (a, b) in self.0.iter().zip(&other.0) {
            let d = a - b;
            acc += d * d;
        }
        Ok(acc.sqrt())
    }

    /// Unit vector in the direction of `self`, or `None` when the norm is
    /// below [`DEGENERATE_NORM`].
    pub fn normalized(&self) -> Option<ParamVector> {
        let n = self.l2_norm();
        (n >= DEGENERATE_NORM).then(|| self.scale(1.0 / n))
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(v: ParamVector) -> Self {
        v.0
    }
}

pub(crate) fn dot_unchecked(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

/// `a·x + y`, elementwise.
pub fn axpy(a: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    x.check_dim(y)?;
    Ok(ParamVector(
        x.0.iter().zip(&y.0).map(|(xi, yi)| a * xi + yi).collect(),
    ))
}

pub fn dot(x: &ParamVector, y: &ParamVector) -> Result<f64> {
    x.dot(y)
}

pub fn l2_norm(x: &ParamVector) -> f64 {
    x.l2_norm()
}
