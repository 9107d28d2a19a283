//! Dense matrices, Cholesky factorization, and multivariate normal sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::rng::RngStream;

/// Pivot tolerance for [`cholesky`], chosen relative to unit-diagonal
/// correlation matrices.
pub const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

/// Symmetry tolerance accepted by [`cholesky`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Row-major dense matrix of finite doubles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("matrix dimensions must be positive".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::SizeMismatch { expected: rows * cols, got: data.len() });
        }
        let m = DenseMatrix { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        DenseMatrix { rows: n, cols: n, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Re-checks the finiteness invariant; used after deserialization, which
    /// bypasses [`DenseMatrix::new`].
    pub fn check_finite(&self) -> Result<()> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::SizeMismatch {
                expected: self.rows * self.cols,
                got: self.data.len(),
            });
        }
        if let Some(bad) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite matrix entry at ({}, {})",
                bad / self.cols,
                bad % self.cols
            )));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// Largest absolute difference between the matrix and its transpose.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Lower-triangular Cholesky factor, rows packed contiguously
/// (`dim * (dim + 1) / 2` entries).
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row `i` of the factor: entries `L[i, 0..=i]`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.lower[start..start + i + 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.lower[i * (i + 1) / 2 + j]
        }
    }

    /// Rebuilds `L * L^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.dim;
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let k = j + 1; // only the first min(i, j) + 1 terms are nonzero
                let v = dot(&self.row(i)[..k], &self.row(j)[..k]);
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    /// Computes `mean + L * g`.
    pub fn mul_add(&self, g: &[f64], mean: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| mean[i] + dot(self.row(i), &g[..=i]))
            .collect()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower Cholesky factorization of a symmetric positive-definite matrix.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot drops to
/// [`CHOLESKY_PIVOT_TOL`] or below, which signals an invalid covariance
/// specification.
pub fn cholesky(m: &DenseMatrix) -> Result<CholeskyFactor> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!(
            "cholesky requires a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::InvalidInput(format!(
            "cholesky requires symmetry within {SYMMETRY_TOL:e}, worst deviation {asym:e}"
        )));
    }
    let n = m.rows();
    let mut lower = vec![0.0f64; n * (n + 1) / 2];
    for i in 0..n {
        let (done, current) = lower.split_at_mut(i * (i + 1) / 2);
        let row_i = &mut current[..i + 1];
        for j in 0..i {
            let row_j = &done[j * (j + 1) / 2..j * (j + 1) / 2 + j + 1];
            let s = dot(&row_i[..j], &row_j[..j]);
            row_i[j] = (m.get(i, j) - s) / row_j[j];
        }
        let pivot = m.get(i, i) - dot(&row_i[..i], &row_i[..i]);
        if pivot <= CHOLESKY_PIVOT_TOL {
            return Err(Error::NotPositiveDefinite { index: i, pivot });
        }
        row_i[i] = pivot.sqrt();
    }
    Ok(CholeskyFactor { dim: n, lower })
}

/// Draws `mean + L * g` with `g` a vector of standard normals from `rng`.
///
/// The draw consumes exactly `factor.dim()` normals in coordinate order, so
/// the identity factor returns the raw draws themselves.
pub fn mvn_sample(factor: &CholeskyFactor, mean: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if mean.len() != factor.dim() {
        return Err(Error::SizeMismatch { expected: factor.dim(), got: mean.len() });
    }
    let mut g = vec![0.0; factor.dim()];
    rng.fill_standard_normal(&mut g);
    Ok(factor.mul_add(&g, mean))
}
