//! Low-rank tensor models: Tucker (core plus factors) and polyadic.

use crate::cube::{cp_to_tensor, multilinear_product, DataCube};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Tucker model: core tensor `G (R1 x R2 x R3)` with factor matrices
/// `U (I x R1)`, `V (J x R2)`, `W (K x R3)`.
#[derive(Clone, Debug)]
pub struct TuckerModel {
    pub core: DataCube,
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    pub w: DenseMatrix,
}

impl TuckerModel {
    pub fn new(core: DataCube, u: DenseMatrix, v: DenseMatrix, w: DenseMatrix) -> Result<Self> {
        let (r1, r2, r3) = core.dims();
        if u.cols() != r1 || v.cols() != r2 || w.cols() != r3 {
            return Err(Error::DimMismatch(format!(
                "tucker factors ({},{},{}) columns vs core {:?}",
                u.cols(),
                v.cols(),
                w.cols(),
                core.dims()
            )));
        }
        Ok(Self { core, u, v, w })
    }

    /// Core dimensions `(R1, R2, R3)`.
    pub fn ranks(&self) -> (usize, usize, usize) {
        self.core.dims()
    }

    /// Dimensions of the reconstructed cube.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.u.rows(), self.v.rows(), self.w.rows())
    }

    /// Evaluate `core ×1 u ×2 v ×3 w` as a dense cube.
    pub fn reconstruct(&self) -> DataCube {
        multilinear_product(&self.core, &self.u, &self.v, &self.w)
            .expect("TuckerModel invariant: compatible shapes")
    }
}

/// Polyadic model with factors `A (I x F)`, `B (J x F)`, `C (K x F)`.
#[derive(Clone, Debug)]
pub struct CPModel {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub c: DenseMatrix,
}

impl CPModel {
    pub fn new(a: DenseMatrix, b: DenseMatrix, c: DenseMatrix) -> Result<Self> {
        let f = a.cols();
        if f == 0 {
            return Err(Error::InvalidArg("polyadic rank must be >= 1".into()));
        }
        if b.cols() != f || c.cols() != f {
            return Err(Error::DimMismatch(format!(
                "cp factors must share a column count: {}, {}, {}",
                a.cols(),
                b.cols(),
                c.cols()
            )));
        }
        Ok(Self { a, b, c })
    }

    /// Number of rank-one terms.
    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    /// Dimensions of the reconstructed cube.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.rows(), self.b.rows(), self.c.rows())
    }

    /// Evaluate the model as a dense cube.
    pub fn reconstruct(&self) -> DataCube {
        cp_to_tensor(self)
    }
}
