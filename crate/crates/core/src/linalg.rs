//! Truncated SVD, HOSVD, generalized Sylvester solvers and spectrum
//! utilities.
//!
//! The Sylvester solver targets systems `A G B + C G D = E` as they arise
//! from the coupled-model normal equations: `A` and `D` symmetric PSD with
//! `B = I` or `C = I`. Those are solved by eigendecomposition of the small
//! symmetric matrices and a diagonal shift-divide. A real-Schur
//! Bartels-Stewart path and a dense Kronecker solve remain as fallbacks
//! for systems outside that family.

use crate::cube::{mode_contract, unfold, DataCube, Mode};
use crate::error::{Error, Result};
use crate::matrix::{kron, DenseMatrix};
use crate::model::TuckerModel;
use nalgebra::{DMatrix, DVector};

/// Relative numerical-rank tolerance (singular values above
/// `REL_RANK_TOL * sigma_max` count towards the rank). Shared with the
/// recoverability checks so the two modules agree on boundary cases.
pub const REL_RANK_TOL: f64 = 1e-10;

/// Relative threshold below which the induced Sylvester operator is
/// reported as singular.
pub const SING_TOL_REL: f64 = 1e-12;

/// Spectrum extremes and condition number of a positive semidefinite
/// operator.
#[derive(Clone, Copy, Debug)]
pub struct SpectrumReport {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub cond: f64,
}

impl SpectrumReport {
    fn from_extremes(sigma_max: f64, sigma_min: f64) -> Self {
        let sigma_min = if sigma_min.abs() <= SING_TOL_REL * sigma_max.abs() {
            0.0
        } else {
            sigma_min
        };
        let cond = if sigma_min <= SING_TOL_REL * sigma_max || sigma_max == 0.0 {
            f64::INFINITY
        } else {
            sigma_max / sigma_min
        };
        Self {
            sigma_max,
            sigma_min,
            cond,
        }
    }

    /// True when the operator is numerically singular.
    pub fn is_degenerate(&self) -> bool {
        !self.cond.is_finite()
    }
}

// ---------------------------------------------------------------------------
// SVD-based factor extraction
// ---------------------------------------------------------------------------

/// Singular values of `m`, descending.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    let svd = m.as_na().into_owned().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Numerical rank with relative tolerance `rel_tol`.
pub fn numerical_rank(m: &DenseMatrix, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > rel_tol * smax).count(),
        _ => 0,
    }
}

/// `r` leading right singular vectors of `m`, as an orthonormal
/// `cols x r` matrix.
///
/// Deterministic sign convention: in each column the entry of largest
/// magnitude (smallest index on ties) is made positive.
pub fn tsvd(m: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    let limit = m.rows().min(m.cols());
    if r == 0 || r > limit {
        return Err(Error::RankOutOfRange { rank: r, limit });
    }
    if m.max_abs() == 0.0 {
        // Degenerate input: any orthonormal basis is valid; pick the canonical one.
        return Ok(DenseMatrix::from_fn(m.cols(), r, |i, j| {
            if i == j {
                1.0
            } else {
                0.0
            }
        }));
    }
    let svd = m.as_na().into_owned().svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let mut out = DenseMatrix::from_fn(m.cols(), r, |i, j| vt[(order[j], i)]);
    fix_signs(&mut out);
    Ok(out)
}

/// Flip column signs so the largest-magnitude entry of each column is
/// positive; ties resolved by the smallest index.
fn fix_signs(m: &mut DenseMatrix) {
    for j in 0..m.cols() {
        let col = m.col(j);
        let mut best = 0usize;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            for i in 0..m.rows() {
                let v = m.get(i, j);
                m.set(i, j, -v);
            }
        }
    }
}

/// Truncated higher-order SVD: orthonormal factors from the three
/// unfoldings, core obtained by projection.
pub fn hosvd(t: &DataCube, ranks: (usize, usize, usize)) -> Result<TuckerModel> {
    let u = tsvd(&unfold(t, Mode::One), ranks.0)?;
    let v = tsvd(&unfold(t, Mode::Two), ranks.1)?;
    let w = tsvd(&unfold(t, Mode::Three), ranks.2)?;
    let core = mode_contract(t, &u.transpose(), Mode::One)?;
    let core = mode_contract(&core, &v.transpose(), Mode::Two)?;
    let core = mode_contract(&core, &w.transpose(), Mode::Three)?;
    TuckerModel::new(core, u, v, w)
}

/// Eigendecomposition of a symmetric matrix; eigenvalues descending,
/// eigenvectors as columns in the matching order.
pub fn symmetric_eigen(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if !m.is_square() {
        return Err(Error::DimMismatch(format!(
            "symmetric_eigen: {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    // Symmetrize to shed round-off asymmetry before factorizing.
    let n = m.rows();
    let sym = DMatrix::from_fn(n, n, |r, c| 0.5 * (m.get(r, c) + m.get(c, r)));
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Moore-Penrose pseudoinverse with relative cutoff [`REL_RANK_TOL`].
/// The flag reports whether any singular value was truncated
/// (numerically rank-deficient input).
pub fn pinv(m: &DenseMatrix) -> (DenseMatrix, bool) {
    let svd = m.as_na().into_owned().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = REL_RANK_TOL * smax;
    let mut deficient = false;
    let inv_s: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| {
            if s > cutoff && s > 0.0 {
                1.0 / s
            } else {
                deficient = true;
                0.0
            }
        })
        .collect();
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut scaled_vt = vt.clone();
    for (i, inv) in inv_s.iter().enumerate() {
        scaled_vt.row_mut(i).scale_mut(*inv);
    }
    let p = scaled_vt.transpose() * u.transpose();
    deficient |= inv_s.len() < m.rows().min(m.cols());
    (DenseMatrix::from_na(p), deficient)
}

/// Solve `G X = RHS` with `G` symmetric PSD, via eigendecomposition with
/// pseudoinverse cutoff. The flag reports a rank-deficient `G`.
pub fn solve_spd(g: &DenseMatrix, rhs: &DenseMatrix) -> Result<(DenseMatrix, bool)> {
    let (vals, vecs) = symmetric_eigen(g)?;
    let vmax = vals.first().copied().unwrap_or(0.0).abs();
    let cutoff = REL_RANK_TOL * vmax;
    let mut deficient = false;
    let proj = vecs.transpose().matmul(rhs);
    let mut scaled = proj;
    for i in 0..vals.len() {
        let inv = if vals[i].abs() > cutoff && vals[i] != 0.0 {
            1.0 / vals[i]
        } else {
            deficient = true;
            0.0
        };
        for j in 0..scaled.cols() {
            let v = scaled.get(i, j);
            scaled.set(i, j, v * inv);
        }
    }
    Ok((vecs.matmul(&scaled), deficient))
}

// ---------------------------------------------------------------------------
// Generalized Sylvester systems
// ---------------------------------------------------------------------------

/// The generalized Sylvester system `A G B + C G D = E` with `A, C` of
/// size `m x m`, `B, D` of size `n x n` and `E` of size `m x n`.
#[derive(Clone, Debug)]
pub struct SylvesterSystem {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub c: DenseMatrix,
    pub d: DenseMatrix,
    pub e: DenseMatrix,
}

impl SylvesterSystem {
    pub fn new(
        a: DenseMatrix,
        b: DenseMatrix,
        c: DenseMatrix,
        d: DenseMatrix,
        e: DenseMatrix,
    ) -> Result<Self> {
        let m = e.rows();
        let n = e.cols();
        if a.shape() != (m, m) || c.shape() != (m, m) || b.shape() != (n, n) || d.shape() != (n, n)
        {
            return Err(Error::DimMismatch(format!(
                "sylvester: a {:?}, c {:?} must be {m}x{m}; b {:?}, d {:?} must be {n}x{n}",
                a.shape(),
                c.shape(),
                b.shape(),
                d.shape()
            )));
        }
        Ok(Self { a, b, c, d, e })
    }

    /// Residual `‖A G B + C G D − E‖_F` of a candidate solution.
    pub fn residual(&self, g: &DenseMatrix) -> f64 {
        let lhs = self
            .a
            .matmul(g)
            .matmul(&self.b)
            .add(&self.c.matmul(g).matmul(&self.d));
        lhs.sub(&self.e).frobenius_norm()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Policy {
    Strict,
    MinNorm,
}

/// Solve the system exactly; errors with [`Error::SingularOperator`] when
/// the induced operator spectrum has a value at or below
/// `SING_TOL_REL * sigma_max`.
pub fn solve_sylvester(sys: &SylvesterSystem) -> Result<DenseMatrix> {
    let (g, _) = solve_impl(sys, Policy::Strict)?;
    debug_assert!(
        sys.residual(&g) <= 1e-10 * sys.e.frobenius_norm().max(f64::MIN_POSITIVE),
        "sylvester residual out of tolerance"
    );
    Ok(g)
}

/// Solve the system, substituting the minimum-norm solution on singular
/// operators instead of failing. The flag reports that the singular
/// branch was taken.
pub fn solve_sylvester_min_norm(sys: &SylvesterSystem) -> Result<(DenseMatrix, bool)> {
    solve_impl(sys, Policy::MinNorm)
}

const ID_TOL: f64 = 1e-13;

fn sym_tol(m: &DenseMatrix) -> f64 {
    1e-12 * m.max_abs().max(1.0)
}

fn commute_within(b: &DenseMatrix, d: &DenseMatrix) -> bool {
    let bd = b.matmul(d);
    let db = d.matmul(b);
    let scale = (b.frobenius_norm() * d.frobenius_norm()).max(f64::MIN_POSITIVE);
    bd.sub(&db).frobenius_norm() <= 1e-10 * scale
}

fn solve_impl(sys: &SylvesterSystem, policy: Policy) -> Result<(DenseMatrix, bool)> {
    let SylvesterSystem { a, b, c, d, e } = sys;
    let b_id = b.is_identity(ID_TOL);
    let c_id = c.is_identity(ID_TOL);
    let a_sym = a.is_symmetric(sym_tol(a));
    let b_sym = b.is_symmetric(sym_tol(b));
    let c_sym = c.is_symmetric(sym_tol(c));
    let d_sym = d.is_symmetric(sym_tol(d));

    if b_id && c_id {
        if a_sym && d_sym {
            return two_sided_eigen(a, d, e, policy);
        }
        let g = bartels_stewart(a, d, e)?;
        return Ok((g, false));
    }
    if c_id && a_sym && b_sym && d_sym && commute_within(b, d) {
        if let Some(res) = commuting_pair_path(a, b, d, e, policy)? {
            return Ok(res);
        }
    }
    if c_id && a_sym && b_sym && d_sym {
        if let Some(res) = pencil_right(a, b, d, e, policy)? {
            return Ok(res);
        }
    }
    if b_id && a_sym && c_sym && d_sym {
        if let Some(res) = pencil_left(a, c, d, e, policy)? {
            return Ok(res);
        }
    }
    // General nonsymmetric system with invertible B and C: reduce to the
    // standard form and run Bartels-Stewart.
    if policy == Policy::Strict {
        if let Some(res) = invert_and_reduce(a, b, c, d, e)? {
            return Ok((res, false));
        }
    }
    dense_kron_fallback(sys, policy)
}

/// Shift-divide on a grid of denominators shared by all eigen paths.
///
/// `y[i][j] /= den[i][j]`; strict policy errors when the smallest
/// denominator magnitude falls below `SING_TOL_REL * largest`.
fn divide_by_denominators(
    y: &mut DenseMatrix,
    den: impl Fn(usize, usize) -> f64,
    policy: Policy,
) -> Result<bool> {
    let (m, n) = y.shape();
    let mut dmax = 0.0_f64;
    let mut dmin = f64::INFINITY;
    for j in 0..n {
        for i in 0..m {
            let v = den(i, j).abs();
            dmax = dmax.max(v);
            dmin = dmin.min(v);
        }
    }
    let tol = SING_TOL_REL * dmax;
    if dmin <= tol && policy == Policy::Strict {
        return Err(Error::SingularOperator {
            sigma_min: dmin,
            tol,
        });
    }
    let mut truncated = false;
    for j in 0..n {
        for i in 0..m {
            let dv = den(i, j);
            let v = y.get(i, j);
            if dv.abs() <= tol {
                truncated = true;
                y.set(i, j, 0.0);
            } else {
                y.set(i, j, v / dv);
            }
        }
    }
    Ok(truncated)
}

/// `A G + G D = E` with symmetric `A`, `D`.
fn two_sided_eigen(
    a: &DenseMatrix,
    d: &DenseMatrix,
    e: &DenseMatrix,
    policy: Policy,
) -> Result<(DenseMatrix, bool)> {
    let (la, qa) = symmetric_eigen(a)?;
    let (ld, qd) = symmetric_eigen(d)?;
    let mut y = qa.transpose().matmul(e).matmul(&qd);
    let flag = divide_by_denominators(&mut y, |i, j| la[i] + ld[j], policy)?;
    Ok((qa.matmul(&y).matmul(&qd.transpose()), flag))
}

/// Simultaneously diagonalize a commuting symmetric pair `(b, d)`.
/// Returns eigenvalue vectors and the shared orthogonal basis, or `None`
/// when the clustered construction fails its own verification.
fn simultaneous_sym_diag(
    b: &DenseMatrix,
    d: &DenseMatrix,
) -> Result<Option<(Vec<f64>, Vec<f64>, DenseMatrix)>> {
    let n = d.rows();
    let (ld, qd) = symmetric_eigen(d)?;
    let spread = (ld.first().copied().unwrap_or(0.0) - ld.last().copied().unwrap_or(0.0)).abs();
    let ctol = 1e-9 * spread.max(1e-9 * d.max_abs()).max(f64::MIN_POSITIVE);
    let bp = qd.transpose().matmul(b).matmul(&qd);

    let mut q = DenseMatrix::zeros(n, n);
    let mut lb = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (ld[end - 1] - ld[end]).abs() <= ctol {
            end += 1;
        }
        let blk = DenseMatrix::from_fn(end - start, end - start, |r, c| {
            bp.get(start + r, start + c)
        });
        let (lblk, qblk) = symmetric_eigen(&blk)?;
        for (off, v) in lblk.iter().enumerate() {
            lb[start + off] = *v;
        }
        for col in 0..end - start {
            for row in 0..n {
                let mut acc = 0.0;
                for t in 0..end - start {
                    acc += qd.get(row, start + t) * qblk.get(t, col);
                }
                q.set(row, start + col, acc);
            }
        }
        start = end;
    }

    // Verify the construction: both conjugations must be diagonal.
    let db = q.transpose().matmul(b).matmul(&q);
    let dd = q.transpose().matmul(d).matmul(&q);
    let mut off = 0.0_f64;
    let mut ld_out = vec![0.0; n];
    for i in 0..n {
        ld_out[i] = dd.get(i, i);
        for j in 0..n {
            if i != j {
                off = off.max(db.get(i, j).abs()).max(dd.get(i, j).abs());
            }
        }
    }
    let scale = b.max_abs().max(d.max_abs()).max(1.0);
    if off > 1e-9 * scale {
        return Ok(None);
    }
    Ok(Some((lb, ld_out, q)))
}

/// `A G B + G D = E` with `B`, `D` symmetric and commuting.
fn commuting_pair_path(
    a: &DenseMatrix,
    b: &DenseMatrix,
    d: &DenseMatrix,
    e: &DenseMatrix,
    policy: Policy,
) -> Result<Option<(DenseMatrix, bool)>> {
    let Some((lb, ld, q)) = simultaneous_sym_diag(b, d)? else {
        return Ok(None);
    };
    let (la, qa) = symmetric_eigen(a)?;
    let mut y = qa.transpose().matmul(e).matmul(&q);
    let flag = divide_by_denominators(&mut y, |i, j| la[i] * lb[j] + ld[j], policy)?;
    Ok(Some((qa.matmul(&y).matmul(&q.transpose()), flag)))
}

/// `A G B + G D = E` through the symmetric-definite pencil `(D, B)`,
/// requiring `B` positive definite.
fn pencil_right(
    a: &DenseMatrix,
    b: &DenseMatrix,
    d: &DenseMatrix,
    e: &DenseMatrix,
    policy: Policy,
) -> Result<Option<(DenseMatrix, bool)>> {
    let Some((lp, v)) = definite_pencil_eigen(d, b)? else {
        return Ok(None);
    };
    let (la, qa) = symmetric_eigen(a)?;
    let mut y = qa.transpose().matmul(e).matmul(&v);
    let flag = divide_by_denominators(&mut y, |i, j| la[i] + lp[j], policy)?;
    Ok(Some((qa.matmul(&y).matmul(&v.transpose()), flag)))
}

/// `A G + C G D = E` through the symmetric-definite pencil `(A, C)`,
/// requiring `C` positive definite.
fn pencil_left(
    a: &DenseMatrix,
    c: &DenseMatrix,
    d: &DenseMatrix,
    e: &DenseMatrix,
    policy: Policy,
) -> Result<Option<(DenseMatrix, bool)>> {
    let Some((th, w)) = definite_pencil_eigen(a, c)? else {
        return Ok(None);
    };
    let (ld, qd) = symmetric_eigen(d)?;
    let mut y = w.transpose().matmul(e).matmul(&qd);
    let flag = divide_by_denominators(&mut y, |i, j| th[i] + ld[j], policy)?;
    Ok(Some((w.matmul(&y).matmul(&qd.transpose()), flag)))
}

/// Eigendecomposition of the symmetric-definite pencil `(S, P)`:
/// returns `(lambda, V)` with `Vᵀ P V = I` and `Vᵀ S V = diag(lambda)`.
/// `None` when `P` is not positive definite.
fn definite_pencil_eigen(
    s: &DenseMatrix,
    p: &DenseMatrix,
) -> Result<Option<(Vec<f64>, DenseMatrix)>> {
    let n = p.rows();
    let p_na = DMatrix::from_fn(n, n, |r, c| 0.5 * (p.get(r, c) + p.get(c, r)));
    let Some(chol) = p_na.cholesky() else {
        return Ok(None);
    };
    let l = chol.l();
    let s_na = s.as_na().into_owned();
    // M = L⁻¹ S L⁻ᵀ
    let t1 = l
        .solve_lower_triangular(&s_na)
        .expect("cholesky factor is nonsingular");
    let t2 = l
        .solve_lower_triangular(&t1.transpose())
        .expect("cholesky factor is nonsingular");
    let m_mat = DenseMatrix::from_na(t2.transpose());
    let (lam, q) = symmetric_eigen(&m_mat)?;
    // V = L⁻ᵀ Q
    let v = l
        .transpose()
        .solve_upper_triangular(&q.as_na().into_owned())
        .expect("cholesky factor is nonsingular");
    Ok(Some((lam, DenseMatrix::from_na(v))))
}

/// Reduce `A G B + C G D = E` with invertible `B` and `C` to standard
/// form `(C⁻¹A) G + G (D B⁻¹) = C⁻¹ E B⁻¹` and run Bartels-Stewart.
fn invert_and_reduce(
    a: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
    d: &DenseMatrix,
    e: &DenseMatrix,
) -> Result<Option<DenseMatrix>> {
    let well = |m: &DenseMatrix| {
        let s = singular_values(m);
        match (s.first(), s.last()) {
            (Some(&hi), Some(&lo)) => lo > 1e-10 * hi && lo > 0.0,
            _ => false,
        }
    };
    if !well(b) || !well(c) {
        return Ok(None);
    }
    let c_lu = c.as_na().into_owned().lu();
    let Some(ca) = c_lu.solve(&a.as_na().into_owned()) else {
        return Ok(None);
    };
    let Some(ce) = c_lu.solve(&e.as_na().into_owned()) else {
        return Ok(None);
    };
    // D B⁻¹ = (B⁻ᵀ Dᵀ)ᵀ, and E B⁻¹ likewise via the transposed system.
    let bt_lu = b.transpose().as_na().into_owned().lu();
    let Some(db) = bt_lu.solve(&d.transpose().as_na().into_owned()) else {
        return Ok(None);
    };
    let Some(eb) = bt_lu.solve(&DenseMatrix::from_na(ce).transpose().as_na().into_owned()) else {
        return Ok(None);
    };
    let g = bartels_stewart(
        &DenseMatrix::from_na(ca),
        &DenseMatrix::from_na(db.transpose()),
        &DenseMatrix::from_na(eb.transpose()),
    )?;
    Ok(Some(g))
}

/// Standard Sylvester `A G + G D = E` by real Schur reduction of both
/// coefficients and quasi-triangular back-substitution.
fn bartels_stewart(a: &DenseMatrix, d: &DenseMatrix, e: &DenseMatrix) -> Result<DenseMatrix> {
    let (qa, ta) = real_schur(a);
    let (qd, td) = real_schur(d);
    let f = qa.transpose().matmul(e).matmul(&qd);
    let y = solve_quasi_triangular(&ta, &td, &f)?;
    Ok(qa.matmul(&y).matmul(&qd.transpose()))
}

fn real_schur(m: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let schur = m.as_na().into_owned().schur();
    let (q, t) = schur.unpack();
    (DenseMatrix::from_na(q), DenseMatrix::from_na(t))
}

/// Diagonal-block boundaries of an upper quasi-triangular matrix.
fn quasi_blocks(t: &DenseMatrix) -> Vec<(usize, usize)> {
    let n = t.rows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let size = if i + 1 < n && t.get(i + 1, i) != 0.0 { 2 } else { 1 };
        blocks.push((i, size));
        i += size;
    }
    blocks
}

/// Solve `Ta Y + Y Td = F` with both coefficients upper quasi-triangular.
fn solve_quasi_triangular(
    ta: &DenseMatrix,
    td: &DenseMatrix,
    f: &DenseMatrix,
) -> Result<DenseMatrix> {
    let m = ta.rows();
    let n = td.rows();
    let mut y = DenseMatrix::zeros(m, n);
    let a_blocks = quasi_blocks(ta);
    let scale = ta.max_abs().max(td.max_abs()).max(f64::MIN_POSITIVE);

    for &(j, nb) in &quasi_blocks(td) {
        // rhs := F[:, j..j+nb] − Y[:, 0..j] · Td[0..j, j..j+nb]
        let mut rhs = DenseMatrix::from_fn(m, nb, |r, c| f.get(r, j + c));
        for c in 0..nb {
            for k in 0..j {
                let t = td.get(k, j + c);
                if t != 0.0 {
                    for r in 0..m {
                        let v = rhs.get(r, c) - y.get(r, k) * t;
                        rhs.set(r, c, v);
                    }
                }
            }
        }
        // Bottom-up over the diagonal blocks of Ta.
        for &(i, na) in a_blocks.iter().rev() {
            let mut r = DenseMatrix::from_fn(na, nb, |rr, cc| rhs.get(i + rr, cc));
            for cc in 0..nb {
                for rr in 0..na {
                    let mut acc = r.get(rr, cc);
                    for k in i + na..m {
                        acc -= ta.get(i + rr, k) * y.get(k, j + cc);
                    }
                    r.set(rr, cc, acc);
                }
            }
            // (I_nb ⊗ Ta_ii + Td_jjᵀ ⊗ I_na) vec(Z) = vec(r)
            let dim = na * nb;
            let mut small = DMatrix::<f64>::zeros(dim, dim);
            for cc in 0..nb {
                for rr in 0..na {
                    let row = cc * na + rr;
                    for k in 0..na {
                        small[(row, cc * na + k)] += ta.get(i + rr, i + k);
                    }
                    for k in 0..nb {
                        small[(row, k * na + rr)] += td.get(j + k, j + cc);
                    }
                }
            }
            let rhs_vec = DVector::from_fn(dim, |idx, _| r.get(idx % na, idx / na));
            let lu = small.lu();
            let Some(z) = lu.solve(&rhs_vec) else {
                return Err(Error::SingularOperator {
                    sigma_min: 0.0,
                    tol: SING_TOL_REL * scale,
                });
            };
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularOperator {
                    sigma_min: 0.0,
                    tol: SING_TOL_REL * scale,
                });
            }
            for cc in 0..nb {
                for rr in 0..na {
                    y.set(i + rr, j + cc, z[cc * na + rr]);
                }
            }
        }
    }
    Ok(y)
}

/// Last-resort dense solve of the vectorized system
/// `(Bᵀ ⊗ A + Dᵀ ⊗ C) vec(G) = vec(E)`.
fn dense_kron_fallback(sys: &SylvesterSystem, policy: Policy) -> Result<(DenseMatrix, bool)> {
    let m = sys.e.rows();
    let n = sys.e.cols();
    if m * n > 4096 {
        return Err(Error::InvalidArg(format!(
            "sylvester system of vectorized size {} exceeds the dense fallback limit",
            m * n
        )));
    }
    let k = kron(&sys.b.transpose(), &sys.a).add(&kron(&sys.d.transpose(), &sys.c));
    let svd = k.as_na().into_owned().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = SING_TOL_REL * smax;
    if policy == Policy::Strict && smin <= tol {
        return Err(Error::SingularOperator {
            sigma_min: smin,
            tol,
        });
    }
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let evec = DVector::from_column_slice(sys.e.data());
    let mut proj = u.transpose() * evec;
    let mut truncated = false;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > tol && *s > 0.0 {
            proj[i] /= *s;
        } else {
            truncated = true;
            proj[i] = 0.0;
        }
    }
    let g = vt.transpose() * proj;
    let out = DenseMatrix::from_col_major(m, n, g.iter().copied().collect())
        .expect("solution is finite");
    Ok((out, truncated))
}

// ---------------------------------------------------------------------------
// Kronecker-sum spectrum
// ---------------------------------------------------------------------------

/// Spectrum extremes of the operator `I ⊗ a_kron + d ⊗ I` for symmetric
/// PSD inputs: every eigenvalue is a pair sum, so the extremes are
/// `lambda_max(A)+lambda_max(D)` and `lambda_min(A)+lambda_min(D)`.
pub fn kron_sum_spectrum(a_kron: &DenseMatrix, d: &DenseMatrix) -> Result<SpectrumReport> {
    if !a_kron.is_square() || !d.is_square() {
        return Err(Error::DimMismatch(
            "kron_sum_spectrum expects square inputs".into(),
        ));
    }
    let (la, _) = symmetric_eigen(a_kron)?;
    let (ld, _) = symmetric_eigen(d)?;
    let amax = la.first().copied().unwrap_or(0.0);
    let amin = la.last().copied().unwrap_or(0.0);
    let dmax = ld.first().copied().unwrap_or(0.0);
    let dmin = ld.last().copied().unwrap_or(0.0);
    Ok(SpectrumReport::from_extremes(amax + dmax, amin + dmin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_mat(rows: usize, cols: usize, rng: &mut StdRng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn rand_spd(n: usize, rng: &mut StdRng) -> DenseMatrix {
        let r = rand_mat(n, n, rng);
        let g = r.gram();
        // shift a touch away from singularity
        g.add(&DenseMatrix::identity(n).scale(0.1))
    }

    fn rand_psd(n: usize, rank: usize, rng: &mut StdRng) -> DenseMatrix {
        let r = rand_mat(rank, n, rng);
        r.gram()
    }

    /// Dense oracle: build the Kronecker operator and solve by LU.
    fn kron_oracle(sys: &SylvesterSystem) -> DenseMatrix {
        let k = kron(&sys.b.transpose(), &sys.a).add(&kron(&sys.d.transpose(), &sys.c));
        let lu = k.as_na().into_owned().lu();
        let e = DVector::from_column_slice(sys.e.data());
        let g = lu.solve(&e).expect("oracle system solvable");
        DenseMatrix::from_col_major(sys.e.rows(), sys.e.cols(), g.iter().copied().collect())
            .unwrap()
    }

    fn projector(basis: &DenseMatrix) -> DenseMatrix {
        basis.matmul(&basis.transpose())
    }

    #[test]
    fn tsvd_identity_subspace() {
        // degenerate spectrum: assert the projector, not the basis
        let q = tsvd(&DenseMatrix::identity(3), 2).unwrap();
        assert_eq!(q.shape(), (3, 2));
        let gram = q.gram();
        assert!(gram.sub(&DenseMatrix::identity(2)).max_abs() < 1e-10);
        // columns lie in the span of the top-2 subspace of I (any 2 of e1..e3)
        let p = projector(&q);
        assert!((p.get(0, 0) + p.get(1, 1) + p.get(2, 2) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn tsvd_sign_convention_forces_positive_peak() {
        let mut m = DenseMatrix::zeros(4, 3);
        m.set(0, 0, 3.0);
        m.set(1, 1, 2.0);
        m.set(2, 2, 1.0);
        let q = tsvd(&m, 1).unwrap();
        assert!((q.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(q.get(1, 0).abs() < 1e-12 && q.get(2, 0).abs() < 1e-12);
    }

    #[test]
    fn tsvd_recovers_row_space_of_low_rank_matrix() {
        let mut rng = StdRng::seed_from_u64(42);
        let left = rand_mat(20, 5, &mut rng);
        let right = rand_mat(5, 8, &mut rng);
        let m = left.matmul(&right);
        let q = tsvd(&m, 5).unwrap();
        // oracle: row-space projector from the full factorization
        let rt = tsvd(&right, 5).unwrap(); // orthonormal basis of row space
        let diff = projector(&q).sub(&projector(&rt)).frobenius_norm();
        assert!(diff < 1e-10, "projector distance {diff}");
    }

    #[test]
    fn tsvd_rejects_out_of_range_rank() {
        let m = DenseMatrix::zeros(3, 2);
        assert!(matches!(
            tsvd(&m, 3),
            Err(Error::RankOutOfRange { rank: 3, limit: 2 })
        ));
    }

    #[test]
    fn tsvd_columns_orthonormal_on_random_inputs() {
        let mut rng = StdRng::seed_from_u64(7);
        for (rows, cols, r) in [(6, 4, 2), (9, 9, 5), (4, 12, 3)] {
            let m = rand_mat(rows, cols, &mut rng);
            let q = tsvd(&m, r).unwrap();
            let g = q.gram();
            assert!(g.sub(&DenseMatrix::identity(r)).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn hosvd_recovers_low_multilinear_rank_cube() {
        let mut rng = StdRng::seed_from_u64(3);
        let g = DataCube::from_fn((2, 2, 2), |_, _, _| rng.random_range(-1.0..1.0));
        let u = rand_mat(6, 2, &mut rng);
        let v = rand_mat(5, 2, &mut rng);
        let w = rand_mat(7, 2, &mut rng);
        let t = crate::cube::multilinear_product(&g, &u, &v, &w).unwrap();
        let model = hosvd(&t, (2, 2, 2)).unwrap();
        assert!(model.reconstruct().rel_error(&t) < 1e-10);
    }

    #[test]
    fn hosvd_full_ranks_is_exact() {
        let mut rng = StdRng::seed_from_u64(5);
        let t = DataCube::from_fn((4, 3, 2), |_, _, _| rng.random_range(-1.0..1.0));
        let model = hosvd(&t, (4, 3, 2)).unwrap();
        assert!(model.reconstruct().rel_error(&t) < 1e-12);
    }

    #[test]
    fn hosvd_zero_cube_has_zero_core_and_orthonormal_factors() {
        let t = DataCube::zeros((3, 3, 3));
        let model = hosvd(&t, (2, 2, 2)).unwrap();
        assert_eq!(model.core.frobenius_norm(), 0.0);
        assert!(model.u.gram().sub(&DenseMatrix::identity(2)).max_abs() < 1e-12);
        assert_eq!(model.reconstruct().frobenius_norm(), 0.0);
    }

    #[test]
    fn sylvester_identity_cases() {
        let mut rng = StdRng::seed_from_u64(11);
        let e = rand_mat(4, 3, &mut rng);
        // A = I, B = I, C = 0, D = 0 → G = E
        let sys = SylvesterSystem::new(
            DenseMatrix::identity(4),
            DenseMatrix::identity(3),
            DenseMatrix::zeros(4, 4),
            DenseMatrix::zeros(3, 3),
            e.clone(),
        )
        .unwrap();
        let g = solve_sylvester(&sys).unwrap();
        assert!(g.sub(&e).max_abs() < 1e-12);
        // C = I, D = I, A = I, B = 0 → G = E
        let sys = SylvesterSystem::new(
            DenseMatrix::identity(4),
            DenseMatrix::zeros(3, 3),
            DenseMatrix::identity(4),
            DenseMatrix::identity(3),
            e.clone(),
        )
        .unwrap();
        let g = solve_sylvester(&sys).unwrap();
        assert!(g.sub(&e).max_abs() < 1e-12);
    }

    #[test]
    fn sylvester_spd_matches_kron_oracle() {
        let mut rng = StdRng::seed_from_u64(23);
        let a = rand_spd(6, &mut rng);
        let d = rand_spd(4, &mut rng);
        let e = rand_mat(6, 4, &mut rng);
        let sys = SylvesterSystem::new(
            a,
            DenseMatrix::identity(4),
            DenseMatrix::identity(6),
            d,
            e,
        )
        .unwrap();
        let g = solve_sylvester(&sys).unwrap();
        let want = kron_oracle(&sys);
        assert!(g.sub(&want).frobenius_norm() / want.frobenius_norm() < 1e-10);
    }

    #[test]
    fn sylvester_commuting_kron_structure_matches_oracle() {
        // B = I ⊗ B0 and D = D0 ⊗ I commute; B is singular here.
        let mut rng = StdRng::seed_from_u64(31);
        let a = rand_psd(3, 2, &mut rng); // singular PSD A too
        let b0 = rand_psd(2, 1, &mut rng); // rank-1, so B is singular
        let d0 = rand_spd(2, &mut rng);
        let b = kron(&DenseMatrix::identity(2), &b0);
        let d = kron(&d0, &DenseMatrix::identity(2));
        let e = rand_mat(3, 4, &mut rng);
        let sys = SylvesterSystem::new(a, b, DenseMatrix::identity(3), d, e).unwrap();
        let g = solve_sylvester(&sys).unwrap();
        let want = kron_oracle(&sys);
        assert!(g.sub(&want).frobenius_norm() / want.frobenius_norm() < 1e-9);
    }

    #[test]
    fn sylvester_pencil_paths_match_oracle() {
        let mut rng = StdRng::seed_from_u64(37);
        // c = I, B SPD, D PSD, A singular PSD (the factor-update shape)
        let a = rand_psd(5, 3, &mut rng);
        let b = rand_spd(4, &mut rng);
        let d = rand_psd(4, 4, &mut rng);
        let e = rand_mat(5, 4, &mut rng);
        let sys = SylvesterSystem::new(a, b, DenseMatrix::identity(5), d, e).unwrap();
        let g = solve_sylvester(&sys).unwrap();
        let want = kron_oracle(&sys);
        assert!(g.sub(&want).frobenius_norm() / want.frobenius_norm() < 1e-9);

        // b = I, C SPD (the spectral-update shape)
        let a = rand_psd(4, 4, &mut rng);
        let c = rand_spd(4, &mut rng);
        let d = rand_psd(5, 3, &mut rng);
        let e = rand_mat(4, 5, &mut rng);
        let sys = SylvesterSystem::new(a, DenseMatrix::identity(5), c, d, e).unwrap();
        let g = solve_sylvester(&sys).unwrap();
        let want = kron_oracle(&sys);
        assert!(g.sub(&want).frobenius_norm() / want.frobenius_norm() < 1e-9);
    }

    #[test]
    fn sylvester_nonsymmetric_schur_path_matches_oracle() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..5 {
            let a = rand_mat(6, 6, &mut rng).add(&DenseMatrix::identity(6).scale(3.0));
            let d = rand_mat(4, 4, &mut rng).add(&DenseMatrix::identity(4).scale(3.0));
            let e = rand_mat(6, 4, &mut rng);
            let sys = SylvesterSystem::new(
                a,
                DenseMatrix::identity(4),
                DenseMatrix::identity(6),
                d,
                e,
            )
            .unwrap();
            let g = solve_sylvester(&sys).unwrap();
            let want = kron_oracle(&sys);
            assert!(g.sub(&want).frobenius_norm() / want.frobenius_norm() < 1e-9);
        }
    }

    #[test]
    fn sylvester_general_nonsymmetric_reduction_matches_oracle() {
        let mut rng = StdRng::seed_from_u64(43);
        let a = rand_mat(4, 4, &mut rng);
        let b = rand_mat(3, 3, &mut rng).add(&DenseMatrix::identity(3).scale(2.0));
        let c = rand_mat(4, 4, &mut rng).add(&DenseMatrix::identity(4).scale(4.0));
        let d = rand_mat(3, 3, &mut rng);
        let e = rand_mat(4, 3, &mut rng);
        let sys = SylvesterSystem::new(a, b, c, d, e).unwrap();
        let g = solve_sylvester(&sys).unwrap();
        let want = kron_oracle(&sys);
        assert!(g.sub(&want).frobenius_norm() / want.frobenius_norm() < 1e-8);
    }

    #[test]
    fn sylvester_reports_singular_operator() {
        // A and D both rank-deficient PSD: pair sums contain an exact zero.
        let mut rng = StdRng::seed_from_u64(47);
        let a = rand_psd(4, 2, &mut rng);
        let d = rand_psd(3, 1, &mut rng);
        let e = rand_mat(4, 3, &mut rng);
        let sys = SylvesterSystem::new(
            a,
            DenseMatrix::identity(3),
            DenseMatrix::identity(4),
            d,
            e,
        )
        .unwrap();
        assert!(matches!(
            solve_sylvester(&sys),
            Err(Error::SingularOperator { .. })
        ));
        let (_, flagged) = solve_sylvester_min_norm(&sys).unwrap();
        assert!(flagged);
    }

    #[test]
    fn sylvester_min_norm_solves_consistent_singular_system() {
        // Build a consistent singular system: E in the range of the operator.
        let mut rng = StdRng::seed_from_u64(53);
        let a = rand_psd(4, 2, &mut rng);
        let d = rand_psd(3, 1, &mut rng);
        let g_true = rand_mat(4, 3, &mut rng);
        let e = a.matmul(&g_true).add(&g_true.matmul(&d));
        let sys = SylvesterSystem::new(
            a.clone(),
            DenseMatrix::identity(3),
            DenseMatrix::identity(4),
            d.clone(),
            e.clone(),
        )
        .unwrap();
        let (g, flagged) = solve_sylvester_min_norm(&sys).unwrap();
        assert!(flagged);
        let resid = sys.residual(&g);
        assert!(resid <= 1e-9 * e.frobenius_norm());
    }

    #[test]
    fn kron_sum_spectrum_identity_pair() {
        let rep = kron_sum_spectrum(&DenseMatrix::identity(4), &DenseMatrix::identity(2)).unwrap();
        assert!((rep.sigma_max - 2.0).abs() < 1e-12);
        assert!((rep.sigma_min - 2.0).abs() < 1e-12);
        assert!((rep.cond - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kron_sum_spectrum_diag_pair_sum_oracle() {
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let d = DenseMatrix::from_rows(&[&[10.0]]);
        let rep = kron_sum_spectrum(&a, &d).unwrap();
        // exhaustive pair sums: {11, 12}
        assert!((rep.sigma_max - 12.0).abs() < 1e-12);
        assert!((rep.sigma_min - 11.0).abs() < 1e-12);
    }

    #[test]
    fn kron_sum_spectrum_matches_explicit_matrix() {
        let mut rng = StdRng::seed_from_u64(59);
        for (na, nd) in [(4, 2), (9, 3), (16, 4), (36, 8)] {
            let a = rand_spd(na, &mut rng);
            let d = rand_spd(nd, &mut rng);
            let rep = kron_sum_spectrum(&a, &d).unwrap();
            let explicit = kron(&DenseMatrix::identity(nd), &a)
                .add(&kron(&d, &DenseMatrix::identity(na)));
            let (vals, _) = symmetric_eigen(&explicit).unwrap();
            let emax = vals.first().unwrap();
            let emin = vals.last().unwrap();
            assert!((rep.sigma_max - emax).abs() <= 1e-8 * emax.abs());
            assert!((rep.sigma_min - emin).abs() <= 1e-8 * emax.abs());
        }
    }

    #[test]
    fn kron_sum_spectrum_degenerate_reports_infinite_cond() {
        let a = DenseMatrix::zeros(2, 2);
        let d = DenseMatrix::zeros(2, 2);
        let rep = kron_sum_spectrum(&a, &d).unwrap();
        assert!(rep.cond.is_infinite());
        assert!(rep.is_degenerate());
    }

    #[test]
    fn pinv_flags_rank_deficiency() {
        let mut rng = StdRng::seed_from_u64(61);
        let full = rand_spd(3, &mut rng);
        let (p, deficient) = pinv(&full);
        assert!(!deficient);
        assert!(p.matmul(&full).sub(&DenseMatrix::identity(3)).max_abs() < 1e-8);
        let low = rand_psd(4, 2, &mut rng);
        let (_, deficient) = pinv(&low);
        assert!(deficient);
    }
}
