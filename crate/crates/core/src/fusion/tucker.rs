//! SVD-based coupled Tucker fusion.
//!
//! SCOTT estimates orthonormal factors from truncated SVDs of the MSI
//! (spatial modes) and HSI (spectral mode) unfoldings, then solves the
//! coupled normal equations for the core tensor as a generalized
//! Sylvester system. The blind variant replaces the known spatial
//! operators by an HOSVD of the MSI plus a pseudoinverse correction of
//! the spectral factor; B-SCOTT applies it per spatial block.

use super::{run_blocked, BlockGrid};
use crate::cube::{mode_contract, multilinear_product, unfold, DataCube, Mode};
use crate::degradation::{degrade, DegradationSet};
use crate::error::{Error, Result};
use crate::linalg::{
    hosvd, kron_sum_spectrum, pinv, solve_sylvester, symmetric_eigen, tsvd, SpectrumReport,
    SylvesterSystem, REL_RANK_TOL,
};
use crate::matrix::{kron, DenseMatrix};
use crate::model::TuckerModel;
use crate::recoverability::{classify_generic, RegionLabel};

/// Rank triple and coupling weight for [`scott`].
#[derive(Clone, Copy, Debug)]
pub struct ScottConfig {
    pub ranks: (usize, usize, usize),
    pub lambda: f64,
}

impl ScottConfig {
    pub fn new(ranks: (usize, usize, usize)) -> Self {
        Self { ranks, lambda: 1.0 }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

/// Result of a SCOTT run.
#[derive(Clone, Debug)]
pub struct ScottOutput {
    pub estimate: DataCube,
    pub model: TuckerModel,
    /// Condition report of the core normal-equation operator.
    pub spectrum: SpectrumReport,
    /// True when the operator was numerically rank-deficient and the
    /// minimum-norm core was substituted.
    pub min_norm: bool,
}

/// Result of the blind algorithms.
#[derive(Clone, Debug)]
pub struct BlindOutput {
    pub estimate: DataCube,
    /// True when a pseudoinverse had to truncate a rank-deficient
    /// spectral correction.
    pub rank_deficient: bool,
}

fn check_pair_dims(hsi: &DataCube, msi: &DataCube, deg: &DegradationSet) -> Result<()> {
    let (i, j, k) = deg.sri_dims();
    let (ih, jh) = deg.hsi_dims();
    let km = deg.k_m();
    if msi.dims() != (i, j, km) {
        return Err(Error::DimMismatch(format!(
            "msi {:?} vs expected {:?}",
            msi.dims(),
            (i, j, km)
        )));
    }
    if hsi.dims() != (ih, jh, k) {
        return Err(Error::DimMismatch(format!(
            "hsi {:?} vs expected {:?}",
            hsi.dims(),
            (ih, jh, k)
        )));
    }
    Ok(())
}

/// Coupled Tucker fusion with known degradation operators.
///
/// Factors come from truncated SVDs of the MSI mode-1/2 unfoldings and
/// the HSI mode-3 unfolding; the core solves the coupled normal
/// equations. Near-singular operators (spectrum minimum below
/// `1e-10 x` maximum) fall back to the minimum-norm core and set the
/// `min_norm` flag so rank sweeps can traverse the non-recoverable
/// region.
pub fn scott(
    hsi: &DataCube,
    msi: &DataCube,
    deg: &DegradationSet,
    cfg: &ScottConfig,
) -> Result<ScottOutput> {
    check_pair_dims(hsi, msi, deg)?;
    let (r1, r2, r3) = cfg.ranks;
    let u = tsvd(&unfold(msi, Mode::One), r1)?;
    let v = tsvd(&unfold(msi, Mode::Two), r2)?;
    let w = tsvd(&unfold(hsi, Mode::Three), r3)?;
    scott_with_factors(hsi, msi, deg, cfg, u, v, w)
}

/// SCOTT with caller-supplied factor matrices. The reconstruction is
/// invariant to rotations of the factor bases, so any orthonormal bases
/// of the same subspaces give the same estimate.
pub fn scott_with_factors(
    hsi: &DataCube,
    msi: &DataCube,
    deg: &DegradationSet,
    cfg: &ScottConfig,
    u: DenseMatrix,
    v: DenseMatrix,
    w: DenseMatrix,
) -> Result<ScottOutput> {
    check_pair_dims(hsi, msi, deg)?;
    let (r1, r2, r3) = cfg.ranks;
    if u.cols() != r1 || v.cols() != r2 || w.cols() != r3 {
        return Err(Error::DimMismatch(
            "factor columns must match the configured ranks".into(),
        ));
    }
    if cfg.lambda <= 0.0 {
        return Err(Error::InvalidArg("lambda must be > 0".into()));
    }
    let lambda = cfg.lambda;
    let p1u = deg.p1.matmul(&u);
    let p2v = deg.p2.matmul(&v);
    let pmw = deg.pm.matmul(&w);
    let ug = p1u.gram();
    let vg = p2v.gram();
    let wg_scaled = pmw.gram().scale(lambda);

    // Right-hand side of the normal equations by mode contractions; the
    // stacked coefficient matrix is never materialized.
    let rhs_h = mode_contract(
        &mode_contract(
            &mode_contract(hsi, &p1u.transpose(), Mode::One)?,
            &p2v.transpose(),
            Mode::Two,
        )?,
        &w.transpose(),
        Mode::Three,
    )?;
    let rhs_m = mode_contract(
        &mode_contract(
            &mode_contract(msi, &u.transpose(), Mode::One)?,
            &v.transpose(),
            Mode::Two,
        )?,
        &pmw.transpose(),
        Mode::Three,
    )?;
    let rhs = rhs_h.add(&rhs_m.scale(lambda));

    let spectrum = kron_sum_spectrum(&kron(&vg, &ug), &wg_scaled)?;

    let near_singular = spectrum.sigma_min <= REL_RANK_TOL * spectrum.sigma_max;
    let (core, min_norm) = if near_singular {
        let core = min_norm_core(&ug, &vg, &wg_scaled, &rhs)?;
        (core, true)
    } else {
        match solve_core(&ug, &vg, &wg_scaled, &rhs, deg, cfg) {
            Ok(core) => (core, false),
            Err(Error::SingularOperator { .. }) => {
                (min_norm_core(&ug, &vg, &wg_scaled, &rhs)?, true)
            }
            Err(e) => return Err(e),
        }
    };

    let model = TuckerModel::new(core, u, v, w)?;
    let estimate = model.reconstruct();
    Ok(ScottOutput {
        estimate,
        model,
        spectrum,
        min_norm,
    })
}

/// Solve the core normal equations as a generalized Sylvester system.
///
/// Two equivalent matricizations exist; the cheaper one depends on where
/// the ranks sit. When the spatial ranks fit inside the degraded grid
/// (label `RecoverableA`, and ties) the mode-3 unfolding of the core is
/// the unknown; when the spectral rank fits inside the MSI band count
/// (label `RecoverableB`) the transposed mode-1 unfolding is used.
fn solve_core(
    ug: &DenseMatrix,
    vg: &DenseMatrix,
    wg_scaled: &DenseMatrix,
    rhs: &DataCube,
    deg: &DegradationSet,
    cfg: &ScottConfig,
) -> Result<DataCube> {
    let (r1, r2, r3) = cfg.ranks;
    let label = classify_generic(deg.sri_dims(), deg.hsi_dims(), deg.k_m(), cfg.ranks);
    let use_option1 = !matches!(label, RegionLabel::RecoverableB);
    if use_option1 {
        // unknown: mode-3 unfolding, R1R2 x R3
        let sys = SylvesterSystem::new(
            kron(vg, ug),
            DenseMatrix::identity(r3),
            DenseMatrix::identity(r1 * r2),
            wg_scaled.clone(),
            unfold(rhs, Mode::Three),
        )?;
        let g3 = solve_sylvester(&sys)?;
        crate::cube::fold(&g3, Mode::Three, (r1, r2, r3))
    } else {
        // unknown: transposed mode-1 unfolding, R1 x R2R3
        let sys = SylvesterSystem::new(
            ug.clone(),
            kron(&DenseMatrix::identity(r3), vg),
            DenseMatrix::identity(r1),
            kron(wg_scaled, &DenseMatrix::identity(r2)),
            unfold(rhs, Mode::One).transpose(),
        )?;
        let g1t = solve_sylvester(&sys)?;
        crate::cube::fold(&g1t.transpose(), Mode::One, (r1, r2, r3))
    }
}

/// Minimum-norm core via the shared eigenbasis of the three Gram
/// matrices: coefficients on numerically null directions are zeroed,
/// which is the pseudoinverse solution because the factor bases are
/// orthonormal.
fn min_norm_core(
    ug: &DenseMatrix,
    vg: &DenseMatrix,
    wg_scaled: &DenseMatrix,
    rhs: &DataCube,
) -> Result<DataCube> {
    let (lu, qu) = symmetric_eigen(ug)?;
    let (lv, qv) = symmetric_eigen(vg)?;
    let (lw, qw) = symmetric_eigen(wg_scaled)?;
    let mut tilde = mode_contract(
        &mode_contract(
            &mode_contract(rhs, &qu.transpose(), Mode::One)?,
            &qv.transpose(),
            Mode::Two,
        )?,
        &qw.transpose(),
        Mode::Three,
    )?;
    let (r1, r2, r3) = tilde.dims();
    let mut dmax = 0.0_f64;
    for p in 0..r1 {
        for q in 0..r2 {
            for r in 0..r3 {
                dmax = dmax.max((lu[p] * lv[q] + lw[r]).abs());
            }
        }
    }
    let cutoff = REL_RANK_TOL * dmax;
    for r in 0..r3 {
        for q in 0..r2 {
            for p in 0..r1 {
                let den = lu[p] * lv[q] + lw[r];
                let v = tilde.get(p, q, r);
                if den.abs() <= cutoff {
                    tilde.set(p, q, r, 0.0);
                } else {
                    tilde.set(p, q, r, v / den);
                }
            }
        }
    }
    multilinear_product(&tilde, &qu, &qv, &qw)
}

/// Blind coupled fusion: HOSVD of the MSI provides the spatial factors
/// and core; the spectral factor is corrected through the HSI mode-3
/// subspace and the known spectral response. The spatial degradation is
/// not needed and may be non-separable.
pub fn blind_scott(
    hsi: &DataCube,
    msi: &DataCube,
    pm: &DenseMatrix,
    ranks: (usize, usize, usize),
) -> Result<BlindOutput> {
    let (_, _, km) = msi.dims();
    let (_, _, k) = hsi.dims();
    if pm.shape() != (km, k) {
        return Err(Error::DimMismatch(format!(
            "spectral response {:?} vs expected {:?}",
            pm.shape(),
            (km, k)
        )));
    }
    let (r1, r2, r3) = ranks;
    if r3 > km {
        return Err(Error::RankOutOfRange {
            rank: r3,
            limit: km,
        });
    }
    let msi_model = hosvd(msi, (r1, r2, r3))?;
    let z = tsvd(&unfold(hsi, Mode::Three), r3)?;
    let (pz_pinv, rank_deficient) = pinv(&pm.matmul(&z));
    let w_hat = z.matmul(&pz_pinv).matmul(&msi_model.w);
    let estimate = multilinear_product(&msi_model.core, &msi_model.u, &msi_model.v, &w_hat)?;
    Ok(BlindOutput {
        estimate,
        rank_deficient,
    })
}

/// Block version of [`blind_scott`]: the spatial grids of both cubes are
/// split by `grid` and each block pair is fused independently.
pub fn bscott(
    hsi: &DataCube,
    msi: &DataCube,
    pm: &DenseMatrix,
    ranks: (usize, usize, usize),
    grid: BlockGrid,
) -> Result<BlindOutput> {
    let (estimate, rank_deficient) = run_blocked(hsi, msi, grid, |hsi_blk, msi_blk| {
        let out = blind_scott(hsi_blk, msi_blk, pm, ranks)?;
        Ok((out.estimate, out.rank_deficient))
    })?;
    Ok(BlindOutput {
        estimate,
        rank_deficient,
    })
}

/// Coupled data-fitting cost of an estimate against the observed pair.
pub fn tucker_cost(
    estimate: &DataCube,
    hsi: &DataCube,
    msi: &DataCube,
    deg: &DegradationSet,
    lambda: f64,
) -> Result<f64> {
    let (est_h, est_m) = degrade(estimate, deg)?;
    let rh = est_h.sub(hsi).frobenius_norm();
    let rm = est_m.sub(msi).frobenius_norm();
    Ok(rh * rh + lambda * rm * rm)
}
