//! CP-based fusion baselines.
//!
//! TenRec fits a polyadic model to the MSI and solves one least-squares
//! problem for the spectral factor; STEREO refines all three factors by
//! alternating exact least-squares updates of the coupled cost, each one
//! a generalized Sylvester system; the hybrid algorithm and SCUBA are
//! the blind counterparts built on an SVD of the HSI spectral unfolding.

use super::{run_blocked, BlockGrid};
use crate::cube::{cp_to_tensor, unfold, DataCube, Mode};
use crate::degradation::DegradationSet;
use crate::error::{Error, Result};
use crate::linalg::{hosvd, pinv, solve_spd, solve_sylvester_min_norm, tsvd, SylvesterSystem};
use crate::matrix::{khatri_rao, DenseMatrix};
use crate::model::CPModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Default sweep budget for the inner polyadic fits.
pub const CP_DEFAULT_MAX_ITERS: usize = 200;
/// Default relative-change stopping tolerance for the inner fits.
pub const CP_DEFAULT_REL_TOL: f64 = 1e-12;
/// Factor-norm cap past which an alternating fit is declared divergent
/// (degenerate low-rank approximations grow colinear factors without
/// bound instead of converging).
pub const FACTOR_NORM_CAP: f64 = 1e8;

/// Rank and schedule for [`stereo`].
#[derive(Clone, Copy, Debug)]
pub struct StereoConfig {
    pub f_rank: usize,
    pub lambda: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl StereoConfig {
    pub fn new(f_rank: usize) -> Self {
        Self {
            f_rank,
            lambda: 1.0,
            max_iters: 25,
            rel_tol: 1e-6,
        }
    }
}

/// Outcome of an alternating polyadic fit.
#[derive(Clone, Debug)]
pub struct CpAlsOutput {
    pub model: CPModel,
    /// Relative fit error `‖t − reconstruction‖ / ‖t‖` at the last sweep.
    pub rel_error: f64,
    pub iterations: usize,
    /// A rank-deficient least-squares subproblem was solved by
    /// pseudoinverse somewhere along the way.
    pub pinv_fallback: bool,
    /// The factor norms exceeded [`FACTOR_NORM_CAP`]; the fit was stopped
    /// and should be treated as failed.
    pub diverged: bool,
}

/// Outcome of TenRec.
#[derive(Clone, Debug)]
pub struct TenrecOutput {
    pub model: CPModel,
    pub estimate: DataCube,
    /// The spectral least-squares solve hit a rank-deficient coefficient.
    pub rank_deficient: bool,
}

/// Outcome of STEREO.
#[derive(Clone, Debug)]
pub struct StereoOutput {
    pub model: CPModel,
    pub estimate: DataCube,
    /// Coupled cost after every factor update (three entries per sweep).
    pub cost_trace: Vec<f64>,
    /// Some update hit a singular subproblem and took the minimum-norm
    /// solution.
    pub flagged: bool,
    pub iterations: usize,
}

/// Outcome of the blind CP algorithms (hybrid and SCUBA).
#[derive(Clone, Debug)]
pub struct HybridOutput {
    pub estimate: DataCube,
    pub rank_deficient: bool,
}

fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.shape(), b.shape(), "hadamard: shape mismatch");
    DenseMatrix::from_fn(a.rows(), a.cols(), |r, c| a.get(r, c) * b.get(r, c))
}

/// Deterministic factor initialization: leading right singular vectors of
/// the unfolding, padded with seeded pseudo-random columns when the
/// requested rank exceeds what the unfolding supports.
fn init_factor(t: &DataCube, mode: Mode, f: usize, seed_tag: u64) -> Result<DenseMatrix> {
    let unf = unfold(t, mode);
    let limit = unf.rows().min(unf.cols());
    let lead = f.min(limit);
    let base = tsvd(&unf, lead)?;
    if lead == f {
        return Ok(base);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(0xC0FF_EE00 ^ seed_tag);
    Ok(DenseMatrix::from_fn(unf.cols(), f, |r, c| {
        if c < lead {
            base.get(r, c)
        } else {
            rng.random_range(-1.0..1.0)
        }
    }))
}

/// Alternating least-squares polyadic approximation of rank `f`.
///
/// The data is first compressed onto the leading `min(dim, f)` singular
/// subspaces of its unfoldings (lossless for tensors of rank `f`); the
/// alternating sweeps run on the small core and the factors are lifted
/// back at the end. The fit error is measured in the original space and
/// is nonincreasing across sweeps; iteration stops on `max_iters`, on a
/// relative cost change below `rel_tol`, or when the factors diverge
/// (see [`FACTOR_NORM_CAP`]).
pub fn cp_als(t: &DataCube, f: usize, max_iters: usize, rel_tol: f64) -> Result<CpAlsOutput> {
    if f == 0 {
        return Err(Error::InvalidArg("polyadic rank must be >= 1".into()));
    }
    let dims = t.dims();
    let cap = |mode: Mode, d: usize| -> usize {
        let unf_rows = match mode {
            Mode::One => dims.1 * dims.2,
            Mode::Two => dims.0 * dims.2,
            Mode::Three => dims.0 * dims.1,
        };
        d.min(f).min(unf_rows)
    };
    let target = (
        cap(Mode::One, dims.0),
        cap(Mode::Two, dims.1),
        cap(Mode::Three, dims.2),
    );
    if target == dims || t.max_abs() == 0.0 {
        return als_sweeps(t, f, max_iters, rel_tol, 0.0, t.frobenius_norm());
    }
    let basis = hosvd(t, target)?;
    // orthogonal split: ‖t − lift(x)‖² = resid² + ‖core − x‖²
    let resid_sq =
        (t.frobenius_norm().powi(2) - basis.core.frobenius_norm().powi(2)).max(0.0);
    let fit = als_sweeps(
        &basis.core,
        f,
        max_iters,
        rel_tol,
        resid_sq,
        t.frobenius_norm(),
    )?;
    let lifted = CPModel::new(
        basis.u.matmul(&fit.model.a),
        basis.v.matmul(&fit.model.b),
        basis.w.matmul(&fit.model.c),
    )?;
    Ok(CpAlsOutput {
        model: lifted,
        ..fit
    })
}

/// Plain alternating sweeps on `t`; `extra_resid_sq` is the squared
/// residual outside the fitting subspace and `norm_full` the norm of the
/// original tensor, so reported errors refer to the uncompressed data.
fn als_sweeps(
    t: &DataCube,
    f: usize,
    max_iters: usize,
    rel_tol: f64,
    extra_resid_sq: f64,
    norm_full: f64,
) -> Result<CpAlsOutput> {
    let mut a = init_factor(t, Mode::One, f, 1)?;
    let mut b = init_factor(t, Mode::Two, f, 2)?;
    let mut c = init_factor(t, Mode::Three, f, 3)?;
    let unf1 = unfold(t, Mode::One);
    let unf2 = unfold(t, Mode::Two);
    let unf3 = unfold(t, Mode::Three);
    let norm_full = norm_full.max(f64::MIN_POSITIVE);

    let mut pinv_fallback = false;
    let mut diverged = false;
    let mut prev_err = f64::INFINITY;
    let mut rel_error = f64::INFINITY;
    let mut iterations = 0;

    for it in 0..max_iters {
        iterations = it + 1;
        // A-update: (CᵀC ∘ BᵀB) Aᵀ = (C ⊙ B)ᵀ Y⁽¹⁾
        let mtt = unf1.transpose().matmul(&khatri_rao(&c, &b)?);
        let (sol, flag) = solve_spd(&hadamard(&c.gram(), &b.gram()), &mtt.transpose())?;
        pinv_fallback |= flag;
        a = sol.transpose();
        // B-update
        let mtt = unf2.transpose().matmul(&khatri_rao(&c, &a)?);
        let (sol, flag) = solve_spd(&hadamard(&c.gram(), &a.gram()), &mtt.transpose())?;
        pinv_fallback |= flag;
        b = sol.transpose();
        // C-update
        let mtt = unf3.transpose().matmul(&khatri_rao(&b, &a)?);
        let (sol, flag) = solve_spd(&hadamard(&b.gram(), &a.gram()), &mtt.transpose())?;
        pinv_fallback |= flag;
        c = sol.transpose();

        let model = CPModel::new(a.clone(), b.clone(), c.clone())?;
        let local = cp_to_tensor(&model).sub(t).frobenius_norm();
        rel_error = (extra_resid_sq + local * local).sqrt() / norm_full;

        if a.max_abs().max(b.max_abs()).max(c.max_abs()) > FACTOR_NORM_CAP {
            diverged = true;
            break;
        }
        if it > 0 && (prev_err - rel_error).abs() <= rel_tol * prev_err.max(f64::MIN_POSITIVE) {
            break;
        }
        prev_err = rel_error;
    }

    Ok(CpAlsOutput {
        model: CPModel::new(a, b, c)?,
        rel_error,
        iterations,
        pinv_fallback,
        diverged,
    })
}

fn check_cp_pair_dims(hsi: &DataCube, msi: &DataCube, deg: &DegradationSet) -> Result<()> {
    let (i, j, k) = deg.sri_dims();
    let (ih, jh) = deg.hsi_dims();
    if msi.dims() != (i, j, deg.k_m()) || hsi.dims() != (ih, jh, k) {
        return Err(Error::DimMismatch(format!(
            "cube pair {:?}/{:?} inconsistent with degradation operators",
            hsi.dims(),
            msi.dims()
        )));
    }
    Ok(())
}

/// Algebraic fusion: polyadic fit of the MSI delivers the spatial
/// factors; the spectral factor solves one least-squares problem against
/// the HSI spectral unfolding.
pub fn tenrec(
    hsi: &DataCube,
    msi: &DataCube,
    deg: &DegradationSet,
    f: usize,
) -> Result<TenrecOutput> {
    check_cp_pair_dims(hsi, msi, deg)?;
    let fit = cp_als(msi, f, CP_DEFAULT_MAX_ITERS, CP_DEFAULT_REL_TOL)?;
    let a0 = fit.model.a;
    let b0 = fit.model.b;
    let p1a = deg.p1.matmul(&a0);
    let p2b = deg.p2.matmul(&b0);
    // (P2B ⊙ P1A)ᵀ (P2B ⊙ P1A) = (P2B)ᵀ(P2B) ∘ (P1A)ᵀ(P1A)
    let gram = hadamard(&p2b.gram(), &p1a.gram());
    let rhs = khatri_rao(&p2b, &p1a)?
        .transpose()
        .matmul(&unfold(hsi, Mode::Three));
    let (c0t, rank_deficient) = solve_spd(&gram, &rhs)?;
    let model = CPModel::new(a0, b0, c0t.transpose())?;
    let estimate = cp_to_tensor(&model);
    Ok(TenrecOutput {
        model,
        estimate,
        rank_deficient: rank_deficient || fit.pinv_fallback,
    })
}

/// Coupled data-fitting cost of a factor triple against the observations.
fn coupled_cost(
    a: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
    hsi: &DataCube,
    msi: &DataCube,
    deg: &DegradationSet,
    lambda: f64,
) -> Result<f64> {
    let h_model = CPModel::new(deg.p1.matmul(a), deg.p2.matmul(b), c.clone())?;
    let m_model = CPModel::new(a.clone(), b.clone(), deg.pm.matmul(c))?;
    let rh = cp_to_tensor(&h_model).sub(hsi).frobenius_norm();
    let rm = cp_to_tensor(&m_model).sub(msi).frobenius_norm();
    Ok(rh * rh + lambda * rm * rm)
}

/// Rebalance column scales: spatial factor columns to unit norm, the
/// scale absorbed into the spectral factor. Leaves the reconstruction
/// unchanged; limits the ill-conditioning that colinear factors cause in
/// later sweeps.
fn normalize_columns(a: &mut DenseMatrix, b: &mut DenseMatrix, c: &mut DenseMatrix) {
    let f = a.cols();
    for r in 0..f {
        let na = a.col(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = b.col(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if na > 0.0 {
            for i in 0..a.rows() {
                let v = a.get(i, r);
                a.set(i, r, v / na);
            }
        }
        if nb > 0.0 {
            for i in 0..b.rows() {
                let v = b.get(i, r);
                b.set(i, r, v / nb);
            }
        }
        let s = if na > 0.0 { na } else { 1.0 } * if nb > 0.0 { nb } else { 1.0 };
        for i in 0..c.rows() {
            let v = c.get(i, r);
            c.set(i, r, v * s);
        }
    }
}

/// Alternating exact minimization of the coupled polyadic cost.
///
/// Each factor update solves its least-squares subproblem through a
/// generalized Sylvester system; the cost is nonincreasing after every
/// half-step. Iteration stops on `max_iters` or when the relative cost
/// change over a sweep falls below `rel_tol`.
pub fn stereo(
    hsi: &DataCube,
    msi: &DataCube,
    deg: &DegradationSet,
    cfg: &StereoConfig,
    init: &CPModel,
) -> Result<StereoOutput> {
    check_cp_pair_dims(hsi, msi, deg)?;
    if init.rank() != cfg.f_rank {
        return Err(Error::DimMismatch(format!(
            "init rank {} vs configured {}",
            init.rank(),
            cfg.f_rank
        )));
    }
    let (i, j, k) = deg.sri_dims();
    if init.dims() != (i, j, k) {
        return Err(Error::DimMismatch(format!(
            "init dims {:?} vs cube {:?}",
            init.dims(),
            (i, j, k)
        )));
    }
    let lambda = cfg.lambda;
    let mut a = init.a.clone();
    let mut b = init.b.clone();
    let mut c = init.c.clone();

    let p1tp1 = deg.p1.transpose().matmul(&deg.p1);
    let p2tp2 = deg.p2.transpose().matmul(&deg.p2);
    let pmtpm = deg.pm.transpose().matmul(&deg.pm);
    let h1 = unfold(hsi, Mode::One);
    let h2 = unfold(hsi, Mode::Two);
    let h3 = unfold(hsi, Mode::Three);
    let m1 = unfold(msi, Mode::One);
    let m2 = unfold(msi, Mode::Two);
    let m3 = unfold(msi, Mode::Three);

    let mut flagged = false;
    let mut cost_trace = Vec::new();
    let mut prev_sweep_cost = coupled_cost(&a, &b, &c, hsi, msi, deg, lambda)?;
    let mut iterations = 0;

    for it in 0..cfg.max_iters {
        iterations = it + 1;
        // A-update:
        //   P1ᵀP1 · A · (CᵀC ∘ (P2B)ᵀ(P2B)) + λ A ((P_MC)ᵀ(P_MC) ∘ BᵀB)
        //     = P1ᵀ (Y_H⁽¹⁾)ᵀ (C ⊙ P2B) + λ (Y_M⁽¹⁾)ᵀ (P_MC ⊙ B)
        let p2b = deg.p2.matmul(&b);
        let pmc = deg.pm.matmul(&c);
        let rhs = deg
            .p1
            .transpose()
            .matmul(&h1.transpose().matmul(&khatri_rao(&c, &p2b)?))
            .add(&m1.transpose().matmul(&khatri_rao(&pmc, &b)?).scale(lambda));
        let sys = SylvesterSystem::new(
            p1tp1.clone(),
            hadamard(&c.gram(), &p2b.gram()),
            DenseMatrix::identity(i),
            hadamard(&pmc.gram(), &b.gram()).scale(lambda),
            rhs,
        )?;
        let (a_new, flag) = solve_sylvester_min_norm(&sys)?;
        flagged |= flag;
        a = a_new;
        cost_trace.push(coupled_cost(&a, &b, &c, hsi, msi, deg, lambda)?);

        // B-update (mode-2 mirror of the A-update)
        let p1a = deg.p1.matmul(&a);
        let rhs = deg
            .p2
            .transpose()
            .matmul(&h2.transpose().matmul(&khatri_rao(&c, &p1a)?))
            .add(&m2.transpose().matmul(&khatri_rao(&pmc, &a)?).scale(lambda));
        let sys = SylvesterSystem::new(
            p2tp2.clone(),
            hadamard(&c.gram(), &p1a.gram()),
            DenseMatrix::identity(j),
            hadamard(&pmc.gram(), &a.gram()).scale(lambda),
            rhs,
        )?;
        let (b_new, flag) = solve_sylvester_min_norm(&sys)?;
        flagged |= flag;
        b = b_new;
        cost_trace.push(coupled_cost(&a, &b, &c, hsi, msi, deg, lambda)?);

        // C-update, unknown Cᵀ (F x K):
        //   ((P2B)ᵀ(P2B) ∘ (P1A)ᵀ(P1A)) Cᵀ + λ (BᵀB ∘ AᵀA) Cᵀ P_MᵀP_M
        //     = (P2B ⊙ P1A)ᵀ Y_H⁽³⁾ + λ (B ⊙ A)ᵀ Y_M⁽³⁾ P_M
        let p2b = deg.p2.matmul(&b);
        let rhs = khatri_rao(&p2b, &p1a)?
            .transpose()
            .matmul(&h3)
            .add(
                &khatri_rao(&b, &a)?
                    .transpose()
                    .matmul(&m3)
                    .matmul(&deg.pm)
                    .scale(lambda),
            );
        let sys = SylvesterSystem::new(
            hadamard(&p2b.gram(), &p1a.gram()),
            DenseMatrix::identity(k),
            hadamard(&b.gram(), &a.gram()).scale(lambda),
            pmtpm.clone(),
            rhs,
        )?;
        let (ct_new, flag) = solve_sylvester_min_norm(&sys)?;
        flagged |= flag;
        c = ct_new.transpose();
        let sweep_cost = coupled_cost(&a, &b, &c, hsi, msi, deg, lambda)?;
        cost_trace.push(sweep_cost);

        normalize_columns(&mut a, &mut b, &mut c);

        let change = (prev_sweep_cost - sweep_cost).abs();
        if change <= cfg.rel_tol * prev_sweep_cost.max(f64::MIN_POSITIVE) {
            break;
        }
        prev_sweep_cost = sweep_cost;
    }

    let model = CPModel::new(a, b, c)?;
    let estimate = cp_to_tensor(&model);
    Ok(StereoOutput {
        model,
        estimate,
        cost_trace,
        flagged,
        iterations,
    })
}

/// Blind CP fusion: polyadic fit of the MSI plus an SVD of the HSI
/// spectral unfolding; the spectral factor is lifted through the known
/// spectral response by a pseudoinverse. Requires `r3 <= K_M`.
pub fn hybrid(
    hsi: &DataCube,
    msi: &DataCube,
    pm: &DenseMatrix,
    f: usize,
    r3: usize,
) -> Result<HybridOutput> {
    let (_, _, km) = msi.dims();
    let (_, _, k) = hsi.dims();
    if pm.shape() != (km, k) {
        return Err(Error::DimMismatch(format!(
            "spectral response {:?} vs expected {:?}",
            pm.shape(),
            (km, k)
        )));
    }
    if r3 > km {
        return Err(Error::RankOutOfRange {
            rank: r3,
            limit: km,
        });
    }
    let fit = cp_als(msi, f, CP_DEFAULT_MAX_ITERS, CP_DEFAULT_REL_TOL)?;
    let z = tsvd(&unfold(hsi, Mode::Three), r3)?;
    let (pz_pinv, rank_deficient) = pinv(&pm.matmul(&z));
    let c_hat = z.matmul(&pz_pinv).matmul(&fit.model.c);
    let model = CPModel::new(fit.model.a, fit.model.b, c_hat)?;
    Ok(HybridOutput {
        estimate: cp_to_tensor(&model),
        rank_deficient: rank_deficient || fit.pinv_fallback,
    })
}

/// Block version of [`hybrid`] over a spatial grid.
pub fn scuba(
    hsi: &DataCube,
    msi: &DataCube,
    pm: &DenseMatrix,
    f: usize,
    r3: usize,
    grid: BlockGrid,
) -> Result<HybridOutput> {
    let (estimate, rank_deficient) = run_blocked(hsi, msi, grid, |hsi_blk, msi_blk| {
        let out = hybrid(hsi_blk, msi_blk, pm, f, r3)?;
        Ok((out.estimate, out.rank_deficient))
    })?;
    Ok(HybridOutput {
        estimate,
        rank_deficient,
    })
}
