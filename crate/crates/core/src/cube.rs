//! Dense 3-way arrays and their mode operations.
//!
//! A cube of dimensions `(I, J, K)` is stored column-major (first index
//! fastest), so `vec(cube)` read off the backing slice equals the stacked
//! vectorization used by every Kronecker identity here. The mode-1
//! unfolding is the `JK x I` matrix whose column `i` is the slice
//! `cube[i, :, :]` vectorized column-major; modes 2 and 3 are analogous
//! (`IK x J` and `IJ x K`).

use crate::error::{Error, Result};
use crate::matrix::{khatri_rao, DenseMatrix};
use crate::model::CPModel;

/// Tensor mode selector for unfoldings and contractions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    pub fn index(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }

    pub fn from_index(one_based: usize) -> Result<Mode> {
        match one_based {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            m => Err(Error::InvalidArg(format!("mode must be 1..=3, got {m}"))),
        }
    }

    /// Size of this mode given cube dimensions.
    fn dim_of(self, dims: (usize, usize, usize)) -> usize {
        match self {
            Mode::One => dims.0,
            Mode::Two => dims.1,
            Mode::Three => dims.2,
        }
    }

    /// Row count of the unfolding (product of the two other dimensions).
    fn corank_of(self, dims: (usize, usize, usize)) -> usize {
        let (i, j, k) = dims;
        match self {
            Mode::One => j * k,
            Mode::Two => i * k,
            Mode::Three => i * j,
        }
    }
}

/// Dense real 3-way array, column-major (first index fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct DataCube {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl DataCube {
    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.0 * dims.1 * dims.2],
        }
    }

    pub fn from_fn(
        dims: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for k in 0..dims.2 {
            for j in 0..dims.1 {
                for i in 0..dims.0 {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    /// Build from a column-major slice, checking length and finiteness.
    pub fn from_col_major(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let want = dims.0 * dims.1 * dims.2;
        if data.len() != want {
            return Err(Error::DimMismatch(format!(
                "cube {dims:?} needs {want} values, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let (di, dj, _) = self.dims;
        self.data[i + di * (j + dj * k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let (di, dj, _) = self.dims;
        self.data[i + di * (j + dj * k)] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> DataCube {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &DataCube) -> DataCube {
        assert_eq!(self.dims, other.dims, "add: shape mismatch");
        Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &DataCube) -> DataCube {
        assert_eq!(self.dims, other.dims, "sub: shape mismatch");
        Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Relative Frobenius distance `‖self − other‖ / ‖other‖`.
    pub fn rel_error(&self, reference: &DataCube) -> f64 {
        self.sub(reference).frobenius_norm() / reference.frobenius_norm()
    }

    /// Copy out the spatial sub-cube `[i0, i0+bi) x [j0, j0+bj) x [0, K)`.
    pub fn spatial_block(&self, i0: usize, bi: usize, j0: usize, bj: usize) -> DataCube {
        assert!(i0 + bi <= self.dims.0 && j0 + bj <= self.dims.1);
        DataCube::from_fn((bi, bj, self.dims.2), |i, j, k| self.get(i0 + i, j0 + j, k))
    }

    /// Write `block` into the spatial window starting at `(i0, j0)`.
    pub fn set_spatial_block(&mut self, i0: usize, j0: usize, block: &DataCube) {
        let (bi, bj, bk) = block.dims();
        assert!(i0 + bi <= self.dims.0 && j0 + bj <= self.dims.1 && bk == self.dims.2);
        for k in 0..bk {
            for j in 0..bj {
                for i in 0..bi {
                    self.set(i0 + i, j0 + j, k, block.get(i, j, k));
                }
            }
        }
    }
}

/// Mode-`mode` unfolding of a cube.
pub fn unfold(t: &DataCube, mode: Mode) -> DenseMatrix {
    let (di, dj, dk) = t.dims();
    let rows = mode.corank_of(t.dims());
    let cols = mode.dim_of(t.dims());
    let mut out = DenseMatrix::zeros(rows, cols);
    for k in 0..dk {
        for j in 0..dj {
            for i in 0..di {
                let v = t.get(i, j, k);
                match mode {
                    Mode::One => out.set(j + dj * k, i, v),
                    Mode::Two => out.set(i + di * k, j, v),
                    Mode::Three => out.set(i + di * j, k, v),
                }
            }
        }
    }
    out
}

/// Inverse of [`unfold`]: rebuild a cube of dimensions `dims` from its
/// mode-`mode` unfolding.
pub fn fold(m: &DenseMatrix, mode: Mode, dims: (usize, usize, usize)) -> Result<DataCube> {
    let want = (mode.corank_of(dims), mode.dim_of(dims));
    if m.shape() != want {
        return Err(Error::DimMismatch(format!(
            "fold: matrix {:?} does not match mode-{} unfolding {:?} of cube {dims:?}",
            m.shape(),
            mode.index() + 1,
            want
        )));
    }
    let (di, dj, _) = dims;
    let mut out = DataCube::zeros(dims);
    for k in 0..dims.2 {
        for j in 0..dj {
            for i in 0..di {
                let v = match mode {
                    Mode::One => m.get(j + dj * k, i),
                    Mode::Two => m.get(i + di * k, j),
                    Mode::Three => m.get(i + di * j, k),
                };
                out.set(i, j, k, v);
            }
        }
    }
    Ok(out)
}

/// Contract mode `mode` of `t` with the second index of `m`.
///
/// For mode 1 the entry `(p, j, k)` of the result is
/// `Σ_i m[p, i] · t[i, j, k]`; the other modes are analogous. Implemented
/// as a matrix product on the unfolding.
pub fn mode_contract(t: &DataCube, m: &DenseMatrix, mode: Mode) -> Result<DataCube> {
    let d = mode.dim_of(t.dims());
    if m.cols() != d {
        return Err(Error::DimMismatch(format!(
            "mode-{} contraction: matrix has {} columns, cube dimension is {d}",
            mode.index() + 1,
            m.cols()
        )));
    }
    let unf = unfold(t, mode).matmul(&m.transpose());
    let mut dims = t.dims();
    match mode {
        Mode::One => dims.0 = m.rows(),
        Mode::Two => dims.1 = m.rows(),
        Mode::Three => dims.2 = m.rows(),
    }
    fold(&unf, mode, dims)
}

/// Multilinear product `g ×1 u ×2 v ×3 w`.
pub fn multilinear_product(
    g: &DataCube,
    u: &DenseMatrix,
    v: &DenseMatrix,
    w: &DenseMatrix,
) -> Result<DataCube> {
    let t = mode_contract(g, u, Mode::One)?;
    let t = mode_contract(&t, v, Mode::Two)?;
    mode_contract(&t, w, Mode::Three)
}

/// Evaluate a polyadic model as a dense cube: the sum of `F` rank-one
/// terms `a_r ∘ b_r ∘ c_r`. Computed through the mode-1 unfolding
/// identity `Y⁽¹⁾ = (C ⊙ B) Aᵀ`.
pub fn cp_to_tensor(m: &CPModel) -> DataCube {
    let unf1 = khatri_rao(&m.c, &m.b)
        .expect("CPModel invariant: equal column counts")
        .matmul(&m.a.transpose());
    fold(&unf1, Mode::One, (m.a.rows(), m.b.rows(), m.c.rows()))
        .expect("shape is consistent by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::kron;

    fn enumeration_cube() -> DataCube {
        // t[i,j,k] = i + 2(j-1) + 4(k-1) with 1-based indices
        DataCube::from_fn((2, 2, 2), |i, j, k| (i + 1 + 2 * j + 4 * k) as f64)
    }

    /// Brute-force unfolding straight from the index definition.
    fn unfold_oracle(t: &DataCube, mode: Mode) -> DenseMatrix {
        let (di, dj, dk) = t.dims();
        match mode {
            Mode::One => DenseMatrix::from_fn(dj * dk, di, |r, i| t.get(i, r % dj, r / dj)),
            Mode::Two => DenseMatrix::from_fn(di * dk, dj, |r, j| t.get(r % di, j, r / di)),
            Mode::Three => DenseMatrix::from_fn(di * dj, dk, |r, k| t.get(r % di, r / di, k)),
        }
    }

    fn random_cube(dims: (usize, usize, usize), seed: u64) -> DataCube {
        // small deterministic pseudo-random fill; no RNG dependency needed here
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
        DataCube::from_fn(dims, |_, _, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 2000) as f64 / 1000.0 - 1.0
        })
    }

    #[test]
    fn singleton_unfolding() {
        let t = DataCube::from_col_major((1, 1, 1), vec![5.0]).unwrap();
        let m = unfold(&t, Mode::One);
        assert_eq!(m.shape(), (1, 1));
        assert_eq!(m.get(0, 0), 5.0);
    }

    #[test]
    fn unfoldings_match_enumeration_oracle() {
        let t = enumeration_cube();
        for mode in Mode::ALL {
            assert_eq!(unfold(&t, mode), unfold_oracle(&t, mode));
        }
    }

    #[test]
    fn fold_of_enumeration_oracle_reproduces_cube() {
        let t = enumeration_cube();
        for mode in Mode::ALL {
            let back = fold(&unfold_oracle(&t, mode), mode, t.dims()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn fold_unfold_round_trip() {
        let t = random_cube((4, 3, 2), 7);
        for mode in Mode::ALL {
            assert_eq!(fold(&unfold(&t, mode), mode, t.dims()).unwrap(), t);
        }
    }

    #[test]
    fn fold_zero_matrix_gives_zero_cube() {
        let z = DenseMatrix::zeros(6, 4);
        let c = fold(&z, Mode::One, (4, 3, 2)).unwrap();
        assert_eq!(c, DataCube::zeros((4, 3, 2)));
    }

    #[test]
    fn fold_rejects_shape_mismatch() {
        let m = DenseMatrix::zeros(5, 4);
        assert!(matches!(
            fold(&m, Mode::One, (4, 3, 2)),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn contraction_with_identity_is_noop() {
        let t = random_cube((3, 4, 2), 3);
        for mode in Mode::ALL {
            let id = DenseMatrix::identity(mode.dim_of(t.dims()));
            assert_eq!(mode_contract(&t, &id, mode).unwrap(), t);
        }
    }

    #[test]
    fn mode1_sum_contraction_matches_loop_oracle() {
        let t = enumeration_cube();
        let m = DenseMatrix::from_rows(&[&[1.0, 1.0]]);
        let c = mode_contract(&t, &m, Mode::One).unwrap();
        assert_eq!(c.dims(), (1, 2, 2));
        for j in 0..2 {
            for k in 0..2 {
                let want: f64 = (0..2).map(|i| t.get(i, j, k)).sum();
                assert!((c.get(0, j, k) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn contraction_unfolding_identity() {
        // unfold(t ×n M, n) = unfold(t, n) Mᵀ
        let t = random_cube((4, 3, 5), 11);
        let ms = [
            DenseMatrix::from_fn(2, 4, |r, c| ((r * 3 + c) as f64).sin()),
            DenseMatrix::from_fn(6, 3, |r, c| ((r + 7 * c) as f64).cos()),
            DenseMatrix::from_fn(2, 5, |r, c| (r as f64) - (c as f64) / 3.0),
        ];
        for (mode, m) in Mode::ALL.into_iter().zip(&ms) {
            let lhs = unfold(&mode_contract(&t, m, mode).unwrap(), mode);
            let rhs = unfold(&t, mode).matmul(&m.transpose());
            assert!(lhs.sub(&rhs).max_abs() < 1e-12);
        }
    }

    #[test]
    fn contractions_on_distinct_modes_commute() {
        let t = random_cube((4, 3, 5), 13);
        let a = DenseMatrix::from_fn(2, 4, |r, c| ((r + c) as f64).sin());
        let c3 = DenseMatrix::from_fn(3, 5, |r, c| ((2 * r + c) as f64).cos());
        let left = mode_contract(&mode_contract(&t, &a, Mode::One).unwrap(), &c3, Mode::Three)
            .unwrap();
        let right = mode_contract(&mode_contract(&t, &c3, Mode::Three).unwrap(), &a, Mode::One)
            .unwrap();
        assert!(left.sub(&right).max_abs() < 1e-12);
    }

    #[test]
    fn multilinear_product_scalar_case() {
        let g = DataCube::from_col_major((1, 1, 1), vec![1.0]).unwrap();
        let u = DenseMatrix::from_rows(&[&[2.0]]);
        let v = DenseMatrix::from_rows(&[&[3.0]]);
        let w = DenseMatrix::from_rows(&[&[5.0]]);
        let y = multilinear_product(&g, &u, &v, &w).unwrap();
        assert!((y.get(0, 0, 0) - 30.0).abs() < 1e-15);
    }

    #[test]
    fn multilinear_product_identity_factors() {
        let g = random_cube((2, 3, 4), 17);
        let y = multilinear_product(
            &g,
            &DenseMatrix::identity(2),
            &DenseMatrix::identity(3),
            &DenseMatrix::identity(4),
        )
        .unwrap();
        assert_eq!(y, g);
    }

    #[test]
    fn multilinear_vectorization_against_kronecker_oracle() {
        // vec(g ×1 u ×2 v ×3 w) = (w ⊗ v ⊗ u) vec(g)
        let g = random_cube((2, 2, 2), 19);
        let u = DenseMatrix::from_fn(3, 2, |r, c| ((r * 2 + c) as f64).sin());
        let v = DenseMatrix::from_fn(3, 2, |r, c| ((r + 5 * c) as f64).cos());
        let w = DenseMatrix::from_fn(3, 2, |r, c| ((3 * r + 2 * c) as f64).sin() + 0.5);
        let y = multilinear_product(&g, &u, &v, &w).unwrap();
        let big = kron(&w, &kron(&v, &u));
        let vg = DenseMatrix::from_col_major(8, 1, g.data().to_vec()).unwrap();
        let vy = big.matmul(&vg);
        let scale = y.frobenius_norm();
        for (a, b) in y.data().iter().zip(vy.data()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn cp_single_rank_one_unit() {
        let e1 = DenseMatrix::from_rows(&[&[1.0], &[0.0]]);
        let m = CPModel::new(e1.clone(), e1.clone(), e1).unwrap();
        let y = cp_to_tensor(&m);
        assert_eq!(y.get(0, 0, 0), 1.0);
        assert_eq!(y.frobenius_norm(), 1.0);
    }

    #[test]
    fn cp_to_tensor_matches_triple_loop_oracle() {
        let a = DenseMatrix::from_fn(3, 2, |r, c| ((r + c) as f64).sin());
        let b = DenseMatrix::from_fn(2, 2, |r, c| ((2 * r + c) as f64).cos());
        let c = DenseMatrix::from_fn(2, 2, |r, c| 0.25 * (r as f64) - (c as f64));
        let m = CPModel::new(a.clone(), b.clone(), c.clone()).unwrap();
        let y = cp_to_tensor(&m);
        let scale = y.max_abs();
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..2 {
                    let want: f64 = (0..2).map(|r| a.get(i, r) * b.get(j, r) * c.get(k, r)).sum();
                    assert!((y.get(i, j, k) - want).abs() <= 1e-13 * scale.max(1.0));
                }
            }
        }
    }

    #[test]
    fn cp_equals_multilinear_with_diagonal_core() {
        let a = DenseMatrix::from_fn(3, 2, |r, c| ((r * r + c) as f64).sin());
        let b = DenseMatrix::from_fn(4, 2, |r, c| ((r + 3 * c) as f64).cos());
        let c = DenseMatrix::from_fn(2, 2, |r, c| (r as f64) + 0.5 * (c as f64) - 0.7);
        let mut diag = DataCube::zeros((2, 2, 2));
        diag.set(0, 0, 0, 1.0);
        diag.set(1, 1, 1, 1.0);
        let m = CPModel::new(a.clone(), b.clone(), c.clone()).unwrap();
        let via_cp = cp_to_tensor(&m);
        let via_ml = multilinear_product(&diag, &a, &b, &c).unwrap();
        let scale = via_cp.frobenius_norm();
        assert!(via_cp.sub(&via_ml).frobenius_norm() <= 1e-13 * scale);
    }
}
