//! Dense real matrices in column-major layout, plus the Kronecker and
//! Khatri-Rao products.
//!
//! Column-major storage is load-bearing: vectorizing a matrix (or a cube,
//! see [`crate::cube`]) by reading its backing slice front to back must
//! agree with the stacked-columns convention that all unfolding and
//! Kronecker identities in this crate assume.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DMatrixView};

/// Dense real matrix, column-major (first index fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Build from a column-major slice, checking length and finiteness.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from row slices; convenient for literals in tests and docs.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let nrows = rows.len();
        let ncols = if nrows == 0 { 0 } else { rows[0].len() };
        assert!(
            rows.iter().all(|r| r.len() == ncols),
            "ragged rows in matrix literal"
        );
        Self::from_fn(nrows, ncols, |r, c| rows[r][c])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r + self.rows * c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r + self.rows * c] = v;
    }

    /// Backing column-major slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Column `c` as a contiguous slice.
    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[self.rows * c..self.rows * (c + 1)]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        DenseMatrix::from_na(self.as_na() * other.as_na())
    }

    /// Gram matrix `selfᵀ * self`.
    pub fn gram(&self) -> DenseMatrix {
        DenseMatrix::from_na(self.as_na().transpose() * self.as_na())
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), other.shape(), "add: shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), other.shape(), "sub: shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for c in 0..self.cols {
            for r in 0..self.rows {
                let want = if r == c { 1.0 } else { 0.0 };
                if (self.get(r, c) - want).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for c in 0..self.cols {
            for r in 0..c {
                if (self.get(r, c) - self.get(c, r)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Zero-copy nalgebra view over the column-major storage.
    pub(crate) fn as_na(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.rows, self.cols)
    }

    pub(crate) fn from_na(m: DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        Self {
            rows,
            cols,
            data: m.data.into(),
        }
    }
}

/// Kronecker product `a ⊗ b`.
///
/// Entry `((ia,ib),(ja,jb))` of the result is `a[ia,ja] * b[ib,jb]`, with
/// the `b` index running fastest, so `vec(B X Aᵀ) = (A ⊗ B) vec(X)`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DenseMatrix::zeros(ra * rb, ca * cb);
    for ja in 0..ca {
        for ia in 0..ra {
            let av = a.get(ia, ja);
            if av == 0.0 {
                continue;
            }
            for jb in 0..cb {
                for ib in 0..rb {
                    out.set(ia * rb + ib, ja * cb + jb, av * b.get(ib, jb));
                }
            }
        }
    }
    out
}

/// Khatri-Rao (column-wise Kronecker) product; requires equal column counts.
pub fn khatri_rao(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.cols() {
        return Err(Error::DimMismatch(format!(
            "khatri_rao: {} vs {} columns",
            a.cols(),
            b.cols()
        )));
    }
    let (ra, rb) = (a.rows(), b.rows());
    let mut out = DenseMatrix::zeros(ra * rb, a.cols());
    for c in 0..a.cols() {
        for ia in 0..ra {
            let av = a.get(ia, c);
            for ib in 0..rb {
                out.set(ia * rb + ib, c, av * b.get(ib, c));
            }
        }
    }
    Ok(out)
}
