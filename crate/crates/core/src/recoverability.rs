//! Recoverability checks for the coupled low-rank model: when is the
//! super-resolution cube uniquely determined by its two degraded
//! observations under a multilinear rank bound?

use crate::degradation::{degrade, DegradationSet};
use crate::error::Result;
use crate::linalg::numerical_rank;
use crate::matrix::DenseMatrix;
use crate::model::{CPModel, TuckerModel};

/// Numerical rank tolerance shared with the solver's singularity
/// threshold so the two modules agree on boundary cases.
pub const RANK_TOL: f64 = 1e-10;

/// Classification of a rank triple for generic (absolutely continuous)
/// models and fixed full-row-rank degradations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionLabel {
    /// The spatial condition holds: `R1 <= I_H` and `R2 <= J_H`.
    RecoverableA,
    /// The spectral condition holds: `R3 <= K_M`.
    RecoverableB,
    /// Both sufficient conditions hold.
    RecoverableBoth,
    /// A coarse condition holds but the rank-balance inequalities fail,
    /// so unfolding ranks collapse and nothing is guaranteed.
    ConditionViolated,
    /// `R3 > K_M` and a spatial rank exceeds the degraded grid: the
    /// reconstruction is non-unique with probability one.
    NonRecoverable,
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::RecoverableA => "recoverable_a",
            RegionLabel::RecoverableB => "recoverable_b",
            RegionLabel::RecoverableBoth => "recoverable_both",
            RegionLabel::ConditionViolated => "condition_violated",
            RegionLabel::NonRecoverable => "non_recoverable",
        }
    }

    pub fn is_recoverable(self) -> bool {
        matches!(
            self,
            RegionLabel::RecoverableA | RegionLabel::RecoverableB | RegionLabel::RecoverableBoth
        )
    }
}

/// Generic recoverability of a rank triple.
///
/// With probability one over absolutely continuous model draws, the cube
/// is uniquely recoverable when `R3 <= K_M` or `(R1, R2) <= (I_H, J_H)`
/// and the rank-balance inequalities hold:
/// `R1 <= min(R3,K_M) R2`, `R2 <= min(R3,K_M) R1`,
/// `R3 <= min(R1,I_H) min(R2,J_H)`. When `R3 > K_M` and a spatial rank
/// exceeds its degraded dimension the reconstruction is non-unique.
///
/// The inequalities are evaluated as given; ranks beyond the cube
/// dimensions are the caller's contract violation and get no special
/// treatment here.
pub fn classify_generic(
    dims: (usize, usize, usize),
    hsi_dims: (usize, usize),
    k_m: usize,
    ranks: (usize, usize, usize),
) -> RegionLabel {
    let (r1, r2, r3) = ranks;
    let _ = dims;
    let (i_h, j_h) = hsi_dims;
    let cond_a = r1 <= i_h && r2 <= j_h;
    let cond_b = r3 <= k_m;
    if !cond_a && !cond_b {
        return RegionLabel::NonRecoverable;
    }
    let balance = r1 <= r3.min(k_m) * r2
        && r2 <= r3.min(k_m) * r1
        && r3 <= r1.min(i_h) * r2.min(j_h);
    if !balance {
        return RegionLabel::ConditionViolated;
    }
    match (cond_a, cond_b) {
        (true, true) => RegionLabel::RecoverableBoth,
        (true, false) => RegionLabel::RecoverableA,
        (false, true) => RegionLabel::RecoverableB,
        (false, false) => unreachable!(),
    }
}

/// Which sufficient condition a deterministic model satisfies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    A,
    B,
    Both,
    None,
}

/// Numerical ranks underlying a deterministic check.
#[derive(Clone, Copy, Debug)]
pub struct RankReport {
    /// Ranks of the degraded unfoldings: MSI modes 1 and 2, HSI mode 3.
    pub unfold_msi_1: usize,
    pub unfold_msi_2: usize,
    pub unfold_hsi_3: usize,
    /// Ranks of the degraded factors.
    pub p1u: usize,
    pub p2v: usize,
    pub pmw: usize,
}

/// Deterministic recoverability verdict for a concrete Tucker model.
#[derive(Clone, Copy, Debug)]
pub struct DeterministicCheck {
    pub recoverable: bool,
    pub which: Which,
    pub report: RankReport,
}

/// Check the deterministic sufficient conditions for a concrete model and
/// degradation set: the degraded unfolding ranks must not drop below the
/// model ranks, and either both degraded spatial factors or the degraded
/// spectral factor must keep full column rank.
pub fn check_deterministic(model: &TuckerModel, deg: &DegradationSet) -> Result<DeterministicCheck> {
    let (r1, r2, r3) = model.ranks();
    let sri = model.reconstruct();
    let (hsi, msi) = degrade(&sri, deg)?;
    let report = RankReport {
        unfold_msi_1: numerical_rank(&crate::cube::unfold(&msi, crate::cube::Mode::One), RANK_TOL),
        unfold_msi_2: numerical_rank(&crate::cube::unfold(&msi, crate::cube::Mode::Two), RANK_TOL),
        unfold_hsi_3: numerical_rank(
            &crate::cube::unfold(&hsi, crate::cube::Mode::Three),
            RANK_TOL,
        ),
        p1u: numerical_rank(&deg.p1.matmul(&model.u), RANK_TOL),
        p2v: numerical_rank(&deg.p2.matmul(&model.v), RANK_TOL),
        pmw: numerical_rank(&deg.pm.matmul(&model.w), RANK_TOL),
    };
    let persists = report.unfold_msi_1 == r1 && report.unfold_msi_2 == r2 && report.unfold_hsi_3 == r3;
    let a = report.p1u == r1 && report.p2v == r2;
    let b = report.pmw == r3;
    let which = match (a, b) {
        (true, true) => Which::Both,
        (true, false) => Which::A,
        (false, true) => Which::B,
        (false, false) => Which::None,
    };
    Ok(DeterministicCheck {
        recoverable: persists && (a || b),
        which,
        report,
    })
}

/// Hypotheses under which a polyadic model of rank `F` is recovered by
/// the coupled fit even when its decomposition is not unique:
/// `rank(A) = rank(P1 A) = rank(B) = rank(P2 B) = F`,
/// `F <= min(I_H, J_H)`, and `P_M C` has no (numerically) zero column.
pub fn check_cp_partial_uniqueness(model: &CPModel, deg: &DegradationSet) -> Result<bool> {
    let f = model.rank();
    let (i_h, j_h) = deg.hsi_dims();
    if f > i_h.min(j_h) {
        return Ok(false);
    }
    let full = |m: &DenseMatrix| numerical_rank(m, RANK_TOL) == f;
    if !(full(&model.a)
        && full(&deg.p1.matmul(&model.a))
        && full(&model.b)
        && full(&deg.p2.matmul(&model.b)))
    {
        return Ok(false);
    }
    let pmc = deg.pm.matmul(&model.c);
    let c_norm = model.c.frobenius_norm();
    for r in 0..pmc.cols() {
        let col_norm = pmc.col(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if col_norm <= 1e-12 * c_norm {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::DataCube;
    use crate::degradation::{spectral_response, Sensor, SensorSpec};
    use crate::matrix::DenseMatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn rank_one_is_recoverable_both() {
        assert_eq!(
            classify_generic((40, 40, 20), (10, 10), 4, (1, 1, 1)),
            RegionLabel::RecoverableBoth
        );
    }

    #[test]
    fn region_geometry_examples() {
        let dims = (144, 144, 200);
        let hsi = (36, 36);
        let km = 6;
        assert_eq!(
            classify_generic(dims, hsi, km, (40, 40, 6)),
            RegionLabel::RecoverableB
        );
        assert_eq!(
            classify_generic(dims, hsi, km, (30, 30, 16)),
            RegionLabel::RecoverableA
        );
        assert_eq!(
            classify_generic(dims, hsi, km, (40, 40, 16)),
            RegionLabel::NonRecoverable
        );
    }

    #[test]
    fn unbalanced_ranks_violate_conditions() {
        // first balance inequality: R1 <= min(R3,K_M) R2 fails (6 < 10)
        assert_eq!(
            classify_generic((20, 20, 12), (10, 10), 6, (10, 1, 6)),
            RegionLabel::ConditionViolated
        );
    }

    #[test]
    fn classification_is_monotone_in_ranks() {
        let dims = (40, 40, 24);
        let hsi = (10, 10);
        let km = 6;
        for r1 in 1..=14 {
            for r3 in 1..=10 {
                let here = classify_generic(dims, hsi, km, (r1, r1, r3));
                if here.is_recoverable() {
                    // decreasing any rank never turns recoverable into
                    // non-recoverable
                    for (d1, d3) in [(1usize, 0usize), (0, 1), (1, 1)] {
                        if r1 > d1 && r3 > d3 {
                            let down = classify_generic(dims, hsi, km, (r1 - d1, r1 - d1, r3 - d3));
                            assert_ne!(down, RegionLabel::NonRecoverable);
                        }
                    }
                }
            }
        }
    }

    fn rand_mat(rows: usize, cols: usize, rng: &mut StdRng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_model(
        dims: (usize, usize, usize),
        ranks: (usize, usize, usize),
        rng: &mut StdRng,
    ) -> TuckerModel {
        TuckerModel::new(
            DataCube::from_fn(ranks, |_, _, _| rng.random_range(-1.0..1.0)),
            rand_mat(dims.0, ranks.0, rng),
            rand_mat(dims.1, ranks.1, rng),
            rand_mat(dims.2, ranks.2, rng),
        )
        .unwrap()
    }

    fn identity_deg(dims: (usize, usize, usize)) -> DegradationSet {
        DegradationSet::from_parts(
            DenseMatrix::identity(dims.0),
            DenseMatrix::identity(dims.1),
            DenseMatrix::identity(dims.2),
        )
        .unwrap()
    }

    #[test]
    fn identity_degradations_pass_both_conditions() {
        let mut rng = StdRng::seed_from_u64(300);
        let model = random_model((6, 6, 6), (2, 3, 2), &mut rng);
        let check = check_deterministic(&model, &identity_deg((6, 6, 6))).unwrap();
        assert!(check.recoverable);
        assert_eq!(check.which, Which::Both);
    }

    #[test]
    fn constructed_spectral_rank_drop_is_detected() {
        let mut rng = StdRng::seed_from_u64(301);
        // K_M = 2 bands; W has 3 columns whose image under P_M collapses:
        // make columns of W differ only outside the averaged supports.
        let km = 2;
        let k = 8;
        let pm = spectral_response(&SensorSpec::new(vec![(1, 4), (5, 8)]), k).unwrap();
        // base spectral factor: rank 3, but P_M W has rank <= 2 always;
        // so condition (b) must fail for R3 = 3.
        let w = rand_mat(k, 3, &mut rng);
        let model = TuckerModel::new(
            DataCube::from_fn((3, 3, 3), |_, _, _| rng.random_range(-1.0..1.0)),
            rand_mat(10, 3, &mut rng),
            rand_mat(10, 3, &mut rng),
            w,
        )
        .unwrap();
        let deg = DegradationSet::from_parts(
            DenseMatrix::identity(10),
            DenseMatrix::identity(10),
            pm,
        )
        .unwrap();
        let check = check_deterministic(&model, &deg).unwrap();
        assert!(check.report.pmw < 3, "rank of P_M W must drop below R3");
        assert!(matches!(check.which, Which::A | Which::None));
        let _ = km;
    }

    #[test]
    fn generic_spectral_condition_holds_across_seeds() {
        // R3 <= K_M with generic spectral response: condition (b) holds
        // on every draw
        let pm = spectral_response(&SensorSpec::new(vec![(1, 2), (3, 4), (5, 6)]), 6).unwrap();
        let deg = DegradationSet::from_parts(
            DenseMatrix::identity(8),
            DenseMatrix::identity(8),
            pm,
        )
        .unwrap();
        for seed in 0..50 {
            let mut rng = StdRng::seed_from_u64(seed);
            let model = random_model((8, 8, 6), (2, 2, 3), &mut rng);
            let check = check_deterministic(&model, &deg).unwrap();
            assert!(
                matches!(check.which, Which::B | Which::Both),
                "seed {seed}: spectral condition failed"
            );
        }
    }

    #[test]
    fn cp_hypotheses_hold_for_generic_rank_one() {
        let mut rng = StdRng::seed_from_u64(302);
        let deg = DegradationSet::wald(
            (16, 16, 8),
            4,
            3,
            2.0,
            Sensor::Custom,
            &SensorSpec::new(vec![(1, 4), (5, 8)]),
        )
        .unwrap();
        let model = CPModel::new(
            rand_mat(16, 1, &mut rng),
            rand_mat(16, 1, &mut rng),
            rand_mat(8, 1, &mut rng),
        )
        .unwrap();
        assert!(check_cp_partial_uniqueness(&model, &deg).unwrap());
    }

    #[test]
    fn cp_hypotheses_fail_on_null_space_spectral_column() {
        let mut rng = StdRng::seed_from_u64(303);
        let pm = spectral_response(&SensorSpec::new(vec![(1, 2), (3, 4)]), 4).unwrap();
        let deg = DegradationSet::from_parts(
            DenseMatrix::identity(6),
            DenseMatrix::identity(6),
            pm,
        )
        .unwrap();
        // column [1, -1, 0, 0] averages to zero in both bands
        let mut c = rand_mat(4, 2, &mut rng);
        c.set(0, 1, 1.0);
        c.set(1, 1, -1.0);
        c.set(2, 1, 0.0);
        c.set(3, 1, 0.0);
        let model = CPModel::new(rand_mat(6, 2, &mut rng), rand_mat(6, 2, &mut rng), c).unwrap();
        assert!(!check_cp_partial_uniqueness(&model, &deg).unwrap());
    }
}
