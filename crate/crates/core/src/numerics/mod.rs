//! Dense real vectors and matrices, a small MLP with analytic gradients,
//! optimizers, and a finite-difference gradient checker.
//!
//! All types hold finite `f64` values; constructors reject NaN/Inf so the
//! invariant is established at the boundary. Shapes are validated wherever a
//! caller can get them wrong, with the offending dimensions in the error.

mod gradcheck;
mod mlp;
mod optim;

pub use gradcheck::{gradient_check, GradientCheck};
pub use mlp::{Activation, InitScheme, LayerGradients, Mlp, MlpGradients};
pub use optim::Optimizer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("loss is non-finite when probing coordinate {coordinate}")]
    NonFiniteProbe { coordinate: usize },
    #[error("non-finite gradient at index {index}; optimizer step refused")]
    NonFiniteGradient { index: usize },
    #[error("empty shape: {context}")]
    EmptyShape { context: &'static str },
}

/// Dense real vector. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Validates that every entry is finite.
    pub fn new(values: Vec<f64>) -> Result<Self, NumericsError> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(NumericsError::NonFinite { index, value });
            }
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Euclidean distance to `other`.
    pub fn dist(&self, other: &Self) -> f64 {
        dist(&self.0, &other.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self += s * other`, in place.
    pub fn axpy(&mut self, s: f64, other: &[f64]) {
        debug_assert_eq!(self.dim(), other.len());
        for (a, b) in self.0.iter_mut().zip(other) {
            *a += s * b;
        }
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for Vector {
    /// Panics on non-finite entries; use [`Vector::new`] for checked input.
    fn from(values: Vec<f64>) -> Self {
        Self::new(values).expect("non-finite entry in vector literal")
    }
}

impl<'a> IntoIterator for &'a Vector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, NumericsError> {
        if rows.is_empty() {
            return Err(NumericsError::EmptyShape { context: "matrix" });
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in &rows {
            if row.len() != cols {
                return Err(NumericsError::DimensionMismatch {
                    context: "matrix row",
                    expected: cols,
                    found: row.len(),
                });
            }
            for (index, &value) in row.iter().enumerate() {
                if !value.is_finite() {
                    return Err(NumericsError::NonFinite { index, value });
                }
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out = self * x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    /// `out = selfᵀ * x`.
    pub fn matvec_transpose(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (r, &xr) in x.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * xr;
            }
        }
    }

    /// Rank-one update `self += s * a bᵀ`.
    pub fn add_outer(&mut self, s: f64, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, &bc) in row.iter_mut().zip(b) {
                *w += s * ar * bc;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_rejects_non_finite() {
        let err = Vector::new(vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, NumericsError::NonFinite { index: 1, .. }));
    }

    #[test]
    fn matrix_rejects_ragged_rows() {
        let err = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, NumericsError::DimensionMismatch { .. }));
    }

    #[test]
    fn matvec_and_transpose_agree_with_manual() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let mut out = vec![0.0; 2];
        m.matvec(&[1.0, 0.5, -1.0], &mut out);
        assert_eq!(out, vec![1.0 + 1.0 - 3.0, 4.0 + 2.5 - 6.0]);

        let mut back = vec![0.0; 3];
        m.matvec_transpose(&[1.0, -1.0], &mut back);
        assert_eq!(back, vec![1.0 - 4.0, 2.0 - 5.0, 3.0 - 6.0]);
    }

    #[test]
    fn vector_distance() {
        let a = Vector::from(vec![0.0, 3.0]);
        let b = Vector::from(vec![4.0, 0.0]);
        assert!((a.dist(&b) - 5.0).abs() < 1e-12);
    }
}
