//! Reconstruction quality metrics and spectral-signature extraction.

use crate::cube::DataCube;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::synth::SignatureBank;
use std::time::Instant;

/// Reported reconstruction SNR is clamped here when the residual is
/// numerically zero.
pub const R_SNR_CLAMP: f64 = 300.0;

/// One evaluation of an estimate against a reference.
#[derive(Clone, Copy, Debug)]
pub struct MetricsReport {
    /// Reconstruction signal-to-noise ratio, dB.
    pub r_snr: f64,
    /// Mean per-slice correlation coefficient.
    pub cc: f64,
    /// Mean spectral angle, degrees.
    pub sam: f64,
    /// Relative dimensionless global error.
    pub ergas: f64,
    /// Wall-clock seconds around the fusion call.
    pub wall_time: f64,
    /// Constant slices skipped by [`cc`].
    pub cc_skipped: usize,
    /// Zero-norm fibres skipped by [`sam`].
    pub sam_degenerate: usize,
}

fn check_same_dims(reference: &DataCube, estimate: &DataCube) -> Result<()> {
    if reference.dims() != estimate.dims() {
        return Err(Error::DimMismatch(format!(
            "metrics: reference {:?} vs estimate {:?}",
            reference.dims(),
            estimate.dims()
        )));
    }
    Ok(())
}

/// Reconstruction SNR `10 log10(‖ref‖² / ‖est − ref‖²)`, clamped at
/// [`R_SNR_CLAMP`] when the residual is numerically zero.
///
/// "Numerically zero" means at or below the round-off floor of the
/// comparison itself, `eps · sqrt(IJK) · ‖ref‖`; residuals at that level
/// carry no information beyond "recovered to machine precision".
pub fn r_snr(reference: &DataCube, estimate: &DataCube) -> Result<f64> {
    check_same_dims(reference, estimate)?;
    let signal = reference.frobenius_norm();
    if signal == 0.0 {
        return Err(Error::ZeroInput("r_snr needs a nonzero reference"));
    }
    let resid = estimate.sub(reference).frobenius_norm();
    let roundoff_floor = f64::EPSILON * (reference.len() as f64).sqrt() * signal;
    if resid <= roundoff_floor {
        return Ok(R_SNR_CLAMP);
    }
    Ok((20.0 * (signal / resid).log10()).min(R_SNR_CLAMP))
}

/// Mean Pearson correlation over spectral slices. Constant slices (in
/// either cube) carry no correlation and are skipped; the count of
/// skipped slices is returned alongside. Errors when every slice is
/// constant.
pub fn cc(reference: &DataCube, estimate: &DataCube) -> Result<(f64, usize)> {
    check_same_dims(reference, estimate)?;
    let (i, j, k) = reference.dims();
    let n = i * j;
    let mut total = 0.0;
    let mut used = 0usize;
    for band in 0..k {
        let mut sum_r = 0.0;
        let mut sum_e = 0.0;
        let mut raw_r = 0.0;
        let mut raw_e = 0.0;
        for jj in 0..j {
            for ii in 0..i {
                let r = reference.get(ii, jj, band);
                let e = estimate.get(ii, jj, band);
                sum_r += r;
                sum_e += e;
                raw_r += r * r;
                raw_e += e * e;
            }
        }
        let mean_r = sum_r / n as f64;
        let mean_e = sum_e / n as f64;
        let mut cov = 0.0;
        let mut var_r = 0.0;
        let mut var_e = 0.0;
        for jj in 0..j {
            for ii in 0..i {
                let dr = reference.get(ii, jj, band) - mean_r;
                let de = estimate.get(ii, jj, band) - mean_e;
                cov += dr * de;
                var_r += dr * dr;
                var_e += de * de;
            }
        }
        // a slice is constant when its centred mass is negligible against
        // its raw mass
        let const_r = var_r.sqrt() <= 1e-12 * raw_r.sqrt();
        let const_e = var_e.sqrt() <= 1e-12 * raw_e.sqrt();
        if const_r || const_e {
            continue;
        }
        total += cov / (var_r.sqrt() * var_e.sqrt());
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidArg(
            "correlation undefined: every slice is constant".into(),
        ));
    }
    Ok((total / used as f64, k - used))
}

/// Mean spectral angle (degrees) over spatial fibres. Fibres with zero
/// norm in either cube are skipped and tallied. Errors when every fibre
/// is degenerate.
pub fn sam(reference: &DataCube, estimate: &DataCube) -> Result<(f64, usize)> {
    check_same_dims(reference, estimate)?;
    let (i, j, k) = reference.dims();
    let mut total = 0.0;
    let mut used = 0usize;
    let mut unit_r = vec![0.0; k];
    let mut unit_e = vec![0.0; k];
    for jj in 0..j {
        for ii in 0..i {
            let mut nr = 0.0;
            let mut ne = 0.0;
            for band in 0..k {
                let r = reference.get(ii, jj, band);
                let e = estimate.get(ii, jj, band);
                nr += r * r;
                ne += e * e;
            }
            if nr == 0.0 || ne == 0.0 {
                continue;
            }
            let (nr, ne) = (nr.sqrt(), ne.sqrt());
            for band in 0..k {
                unit_r[band] = reference.get(ii, jj, band) / nr;
                unit_e[band] = estimate.get(ii, jj, band) / ne;
            }
            // angle via the stable half-angle form: exact zero for equal
            // fibres, accurate near 0 and pi where acos loses digits
            let mut diff = 0.0;
            let mut sum = 0.0;
            for band in 0..k {
                let d = unit_r[band] - unit_e[band];
                let s = unit_r[band] + unit_e[band];
                diff += d * d;
                sum += s * s;
            }
            total += 2.0 * diff.sqrt().atan2(sum.sqrt());
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::InvalidArg("every spatial fibre is zero".into()));
    }
    Ok((total / used as f64 * 180.0 / std::f64::consts::PI, i * j - used))
}

/// Relative dimensionless global error
/// `(100/d) sqrt((1/IJK) Σ_k ‖est_k − ref_k‖² / mean(est_k)²)`.
/// Errors when an estimated slice has zero mean.
pub fn ergas(reference: &DataCube, estimate: &DataCube, d: usize) -> Result<f64> {
    check_same_dims(reference, estimate)?;
    if d == 0 {
        return Err(Error::InvalidArg("ergas: downsampling ratio must be >= 1".into()));
    }
    let (i, j, k) = reference.dims();
    let n = (i * j) as f64;
    let mut acc = 0.0;
    for band in 0..k {
        let mut sum_e = 0.0;
        let mut sq = 0.0;
        for jj in 0..j {
            for ii in 0..i {
                let e = estimate.get(ii, jj, band);
                sum_e += e;
                let diff = e - reference.get(ii, jj, band);
                sq += diff * diff;
            }
        }
        let mu = sum_e / n;
        if mu == 0.0 {
            return Err(Error::InvalidArg(format!(
                "ergas: estimated slice {band} has zero mean"
            )));
        }
        acc += sq / (mu * mu);
    }
    Ok(100.0 / d as f64 * (acc / (i * j * k) as f64).sqrt())
}

/// Evaluate the full metric set at once.
pub fn evaluate(
    reference: &DataCube,
    estimate: &DataCube,
    d: usize,
    wall_time: f64,
) -> Result<MetricsReport> {
    let r = r_snr(reference, estimate)?;
    let (cc_val, cc_skipped) = cc(reference, estimate)?;
    let (sam_val, sam_degenerate) = sam(reference, estimate)?;
    let ergas_val = ergas(reference, estimate, d)?;
    Ok(MetricsReport {
        r_snr: r,
        cc: cc_val,
        sam: sam_val,
        ergas: ergas_val,
        wall_time,
        cc_skipped,
        sam_degenerate,
    })
}

/// Wall-clock a closure; returns its output and elapsed seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Mean spectral fibre per labelled region. `labels` is an `I x J`
/// matrix of nonnegative integers; label `0` is background and produces
/// no signature. Returns the bank (one signature per label with at
/// least one pixel) and the list of labels that had no pixels.
pub fn extract_signatures(
    sri: &DataCube,
    labels: &DenseMatrix,
) -> Result<(SignatureBank, Vec<usize>)> {
    let (i, j, k) = sri.dims();
    if labels.shape() != (i, j) {
        return Err(Error::DimMismatch(format!(
            "label map {:?} vs spatial grid {:?}",
            labels.shape(),
            (i, j)
        )));
    }
    let mut max_label = 0usize;
    for c in 0..j {
        for r in 0..i {
            let v = labels.get(r, c);
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::InvalidArg(format!(
                    "label at ({r},{c}) is not a nonnegative integer: {v}"
                )));
            }
            max_label = max_label.max(v as usize);
        }
    }
    if max_label == 0 {
        return Err(Error::InvalidArg("label map has no nonzero labels".into()));
    }
    let mut sums = vec![vec![0.0f64; k]; max_label];
    let mut counts = vec![0usize; max_label];
    for c in 0..j {
        for r in 0..i {
            let label = labels.get(r, c) as usize;
            if label == 0 {
                continue;
            }
            counts[label - 1] += 1;
            for band in 0..k {
                sums[label - 1][band] += sri.get(r, c, band);
            }
        }
    }
    let mut signatures = Vec::new();
    let mut names = Vec::new();
    let mut empty = Vec::new();
    for (idx, (sum, count)) in sums.into_iter().zip(counts).enumerate() {
        if count == 0 {
            empty.push(idx + 1);
            continue;
        }
        signatures.push(sum.into_iter().map(|v| v / count as f64).collect());
        names.push(format!("material_{}", idx + 1));
    }
    Ok((SignatureBank::new(signatures, names)?, empty))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::add_noise;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_cube(dims: (usize, usize, usize), seed: u64) -> DataCube {
        let mut rng = StdRng::seed_from_u64(seed);
        DataCube::from_fn(dims, |_, _, _| rng.random_range(0.1..2.0))
    }

    #[test]
    fn perfect_estimate_hits_ideal_values() {
        let t = rand_cube((4, 5, 3), 1);
        let rep = evaluate(&t, &t, 4, 0.0).unwrap();
        assert_eq!(rep.r_snr, R_SNR_CLAMP);
        assert!((rep.cc - 1.0).abs() < 1e-12);
        assert_eq!(rep.sam, 0.0);
        assert_eq!(rep.ergas, 0.0);
    }

    #[test]
    fn r_snr_hand_oracle_20db() {
        // ‖ref‖² = 100, residual ‖e‖² = 1 → 20 dB
        let mut reference = DataCube::zeros((1, 1, 4));
        reference.set(0, 0, 0, 10.0);
        let mut estimate = reference.clone();
        estimate.set(0, 0, 1, 1.0);
        let v = r_snr(&reference, &estimate).unwrap();
        assert!((v - 20.0).abs() < 1e-12);
    }

    #[test]
    fn r_snr_scale_invariant() {
        let t = rand_cube((3, 3, 3), 2);
        let e = rand_cube((3, 3, 3), 3);
        let a = r_snr(&t, &e).unwrap();
        let b = r_snr(&t.scale(3.7), &e.scale(3.7)).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn r_snr_rejects_zero_reference() {
        let z = DataCube::zeros((2, 2, 2));
        assert!(matches!(r_snr(&z, &z), Err(Error::ZeroInput(_))));
    }

    #[test]
    fn cc_sign_cases() {
        let t = rand_cube((4, 4, 2), 4);
        let (plus, _) = cc(&t, &t).unwrap();
        assert!((plus - 1.0).abs() < 1e-12);
        let (minus, _) = cc(&t, &t.scale(-1.0)).unwrap();
        assert!((minus + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cc_two_slice_hand_oracle() {
        // slice 0: estimate equals reference (rho = 1)
        // slice 1: estimate orthogonal to reference after centring (rho = 0)
        let mut reference = DataCube::zeros((2, 2, 2));
        let mut estimate = DataCube::zeros((2, 2, 2));
        let r0 = [1.0, 2.0, 3.0, 4.0];
        for (p, v) in r0.iter().enumerate() {
            reference.set(p % 2, p / 2, 0, *v);
            estimate.set(p % 2, p / 2, 0, *v);
        }
        // centred reference: [-1.5, -0.5, 0.5, 1.5]; estimate pattern
        // [1, -1, -1, 1] is centred already and orthogonal to it
        let r1 = [1.0, 2.0, 3.0, 4.0];
        let e1 = [2.0, 0.0, 0.0, 2.0];
        for p in 0..4 {
            reference.set(p % 2, p / 2, 1, r1[p]);
            estimate.set(p % 2, p / 2, 1, e1[p]);
        }
        let (v, skipped) = cc(&reference, &estimate).unwrap();
        assert_eq!(skipped, 0);
        assert!((v - 0.5).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn cc_skips_constant_slices_and_errors_when_all_constant() {
        let mut reference = rand_cube((3, 3, 2), 5);
        let estimate = reference.clone();
        for p in 0..9 {
            reference.set(p % 3, p / 3, 1, 7.5); // constant slice
        }
        let (_, skipped) = cc(&reference, &estimate).unwrap();
        assert_eq!(skipped, 1);
        let flat = DataCube::from_fn((2, 2, 2), |_, _, _| 3.0);
        assert!(cc(&flat, &flat).is_err());
    }

    #[test]
    fn sam_right_angle_and_scale_invariance() {
        let mut reference = DataCube::zeros((1, 1, 2));
        let mut estimate = DataCube::zeros((1, 1, 2));
        reference.set(0, 0, 0, 1.0);
        estimate.set(0, 0, 1, 1.0);
        let (angle, _) = sam(&reference, &estimate).unwrap();
        assert!((angle - 90.0).abs() < 1e-12);

        let t = rand_cube((3, 3, 4), 6);
        let (zero, _) = sam(&t, &t.scale(2.0)).unwrap();
        assert!(zero < 1e-6);
    }

    #[test]
    fn sam_tallies_zero_fibres() {
        let mut reference = rand_cube((2, 1, 3), 7);
        let estimate = reference.clone();
        for band in 0..3 {
            reference.set(1, 0, band, 0.0);
        }
        let (_, degenerate) = sam(&reference, &estimate).unwrap();
        assert_eq!(degenerate, 1);
    }

    #[test]
    fn ergas_hand_oracle_2x2x1() {
        // estimate slice mean 2, per-pixel squared error 4
        let reference = DataCube::from_fn((2, 2, 1), |_, _, _| 0.0);
        let estimate = DataCube::from_fn((2, 2, 1), |_, _, _| 2.0);
        // Σ‖diff‖²/μ² = 16/4 = 4; (1/IJK)·4 = 1 → ergas = 100/d
        for d in [1usize, 2, 4] {
            let v = ergas(&reference, &estimate, d).unwrap();
            assert!((v - 100.0 / d as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn ergas_rejects_zero_mean_estimate_slice() {
        let reference = rand_cube((2, 2, 1), 8);
        let mut estimate = reference.clone();
        estimate.set(0, 0, 0, 1.0);
        estimate.set(1, 0, 0, -1.0);
        estimate.set(0, 1, 0, 1.0);
        estimate.set(1, 1, 0, -1.0);
        assert!(ergas(&reference, &estimate, 4).is_err());
    }

    #[test]
    fn r_snr_decreases_along_noise_ladder() {
        let t = rand_cube((6, 6, 4), 9);
        let mut prev = f64::INFINITY;
        for (step, snr) in [60.0, 40.0, 30.0, 20.0, 10.0].into_iter().enumerate() {
            let noisy = add_noise(&t, snr, 1234 + step as u64).unwrap();
            let v = r_snr(&t, &noisy).unwrap();
            assert!(v < prev, "snr ladder not monotone at step {step}");
            prev = v;
        }
    }

    #[test]
    fn extract_signatures_uniform_cube() {
        let t = DataCube::from_fn((3, 3, 4), |_, _, k| (k + 1) as f64);
        let labels = DenseMatrix::from_fn(3, 3, |r, c| ((r + c) % 2 + 1) as f64);
        let (bank, empty) = extract_signatures(&t, &labels).unwrap();
        assert!(empty.is_empty());
        assert_eq!(bank.len(), 2);
        for n in 1..=2 {
            for k in 0..4 {
                assert!((bank.get(n)[k] - (k + 1) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extract_signatures_two_pixel_mean_oracle() {
        let mut t = DataCube::zeros((2, 1, 3));
        for (band, v) in [1.0, 2.0, 3.0].into_iter().enumerate() {
            t.set(0, 0, band, v);
            t.set(1, 0, band, v + 1.0);
        }
        let labels = DenseMatrix::from_fn(2, 1, |_, _| 1.0);
        let (bank, _) = extract_signatures(&t, &labels).unwrap();
        for (band, want) in [1.5, 2.5, 3.5].into_iter().enumerate() {
            assert!((bank.get(1)[band] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn extract_signatures_background_and_empty_regions() {
        let t = rand_cube((2, 2, 3), 10);
        let labels = DenseMatrix::from_fn(2, 2, |r, c| if r == 0 && c == 0 { 3.0 } else { 0.0 });
        let (bank, empty) = extract_signatures(&t, &labels).unwrap();
        assert_eq!(bank.len(), 1); // only label 3 has pixels
        assert_eq!(empty, vec![1, 2]);
        let zeros = DenseMatrix::zeros(2, 2);
        assert!(extract_signatures(&t, &zeros).is_err());
    }
}
