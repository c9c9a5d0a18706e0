//! Construction of the spatial and spectral degradation operators and the
//! forward degradation pipeline.
//!
//! Spatial degradation follows the blur-then-downsample protocol:
//! `P = S T` where `T` is a Gaussian blurring matrix (truncated at the
//! boundaries without renormalization) and `S` keeps one sample out of
//! every `d`, anchored at row 2. Spectral degradation is a
//! selection-averaging matrix built from per-sensor band ranges.

use crate::cube::{mode_contract, DataCube, Mode};
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::DenseMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Sensor family used to build the spectral response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sensor {
    /// Six visible/IR windows over a 400-2500nm span.
    Landsat,
    /// Four visible/near-IR windows over a 430-860nm span.
    Quickbird,
    /// Single panchromatic band averaging the full spectral range.
    Pan,
    /// User-supplied band ranges.
    Custom,
}

impl Sensor {
    pub fn name(self) -> &'static str {
        match self {
            Sensor::Landsat => "LANDSAT",
            Sensor::Quickbird => "QUICKBIRD",
            Sensor::Pan => "PAN",
            Sensor::Custom => "CUSTOM",
        }
    }

    pub fn parse(s: &str) -> Result<Sensor> {
        match s.to_ascii_uppercase().as_str() {
            "LANDSAT" => Ok(Sensor::Landsat),
            "QUICKBIRD" => Ok(Sensor::Quickbird),
            "PAN" => Ok(Sensor::Pan),
            "CUSTOM" => Ok(Sensor::Custom),
            other => Err(Error::InvalidArg(format!("unknown sensor {other:?}"))),
        }
    }
}

/// Inclusive 1-based band ranges defining a selection-averaging spectral
/// response; ranges must be nonempty, in-range and non-overlapping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SensorSpec {
    pub band_ranges: Vec<(usize, usize)>,
}

/// Wavelength windows (nm) of the supported sensors; used to derive band
/// index ranges for a given band count by proportional mapping. The
/// mapping is approximate: exact band indices are dataset metadata.
const LANDSAT_SPAN: (f64, f64) = (400.0, 2500.0);
const LANDSAT_WINDOWS: [(f64, f64); 6] = [
    (450.0, 520.0),
    (520.0, 600.0),
    (630.0, 690.0),
    (760.0, 900.0),
    (1550.0, 1750.0),
    (2050.0, 2350.0),
];
const QUICKBIRD_SPAN: (f64, f64) = (430.0, 860.0);
const QUICKBIRD_WINDOWS: [(f64, f64); 4] = [
    (430.0, 545.0),
    (466.0, 620.0),
    (590.0, 710.0),
    (715.0, 918.0),
];

impl SensorSpec {
    pub fn new(band_ranges: Vec<(usize, usize)>) -> Self {
        Self { band_ranges }
    }

    /// Derive band index ranges for `k` bands from the sensor's wavelength
    /// windows, assuming band centres spaced linearly over the span.
    /// Overlapping windows are clipped so the supports stay disjoint.
    pub fn for_sensor(sensor: Sensor, k: usize) -> Result<SensorSpec> {
        match sensor {
            Sensor::Pan => Ok(SensorSpec::new(vec![(1, k)])),
            Sensor::Landsat => Self::from_windows(LANDSAT_SPAN, &LANDSAT_WINDOWS, k),
            Sensor::Quickbird => Self::from_windows(QUICKBIRD_SPAN, &QUICKBIRD_WINDOWS, k),
            Sensor::Custom => Err(Error::InvalidArg(
                "custom sensor needs explicit band ranges".into(),
            )),
        }
    }

    fn from_windows(span: (f64, f64), windows: &[(f64, f64)], k: usize) -> Result<SensorSpec> {
        if k < windows.len() {
            return Err(Error::InvalidArg(format!(
                "cannot map {} windows onto {k} bands",
                windows.len()
            )));
        }
        let width = span.1 - span.0;
        let index_of = |wavelength: f64| -> usize {
            // nearest band centre, 1-based, clamped into range
            let pos = (wavelength - span.0) / width * (k - 1) as f64;
            (pos.round().max(0.0) as usize + 1).min(k)
        };
        let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(windows.len());
        for &(w0, w1) in windows {
            let mut start = index_of(w0);
            let end = index_of(w1);
            if let Some(&(_, prev_end)) = ranges.last() {
                // clip overlap against the previous window
                start = start.max(prev_end + 1);
            }
            if start > end {
                return Err(Error::InvalidArg(format!(
                    "window {w0}-{w1}nm maps to an empty band range for {k} bands"
                )));
            }
            ranges.push((start, end));
        }
        Ok(SensorSpec::new(ranges))
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.band_ranges.is_empty() {
            return Err(Error::InvalidArg("sensor spec has no band ranges".into()));
        }
        let mut seen = vec![false; k];
        for &(start, end) in &self.band_ranges {
            if start == 0 || end < start || end > k {
                return Err(Error::InvalidArg(format!(
                    "band range ({start},{end}) invalid for {k} bands"
                )));
            }
            for b in start..=end {
                if seen[b - 1] {
                    return Err(Error::InvalidArg(format!(
                        "band {b} appears in more than one range"
                    )));
                }
                seen[b - 1] = true;
            }
        }
        Ok(())
    }
}

/// Unnormalized Gaussian kernel of odd length `q`:
/// `phi(m) = exp(-(m - ceil(q/2))² / (2 sigma²)) / sqrt(2 pi sigma²)`
/// for `m = 1..=q`.
pub fn gaussian_kernel(q: usize, sigma: f64) -> Result<Vec<f64>> {
    if q % 2 == 0 || q == 0 {
        return Err(Error::InvalidArg(format!("kernel size must be odd, got {q}")));
    }
    if sigma <= 0.0 {
        return Err(Error::InvalidArg(format!("sigma must be > 0, got {sigma}")));
    }
    let centre = q.div_ceil(2) as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt();
    Ok((1..=q)
        .map(|m| {
            let mp = m as f64 - centre;
            norm * (-mp * mp / (2.0 * sigma * sigma)).exp()
        })
        .collect())
}

/// Banded blurring matrix: column `j` carries the kernel centred at row
/// `j`, truncated at the boundaries without renormalization.
pub fn blur_matrix(i_dim: usize, q: usize, sigma: f64) -> Result<DenseMatrix> {
    if q > i_dim {
        return Err(Error::InvalidArg(format!(
            "kernel size {q} exceeds dimension {i_dim}"
        )));
    }
    let phi = gaussian_kernel(q, sigma)?;
    let centre = q.div_ceil(2) as isize; // 1-based kernel index of the peak
    Ok(DenseMatrix::from_fn(i_dim, i_dim, |i, j| {
        let m = centre + j as isize - i as isize; // phi index, 1-based
        if m >= 1 && m <= q as isize {
            phi[(m - 1) as usize]
        } else {
            0.0
        }
    }))
}

/// Downsampling matrix with ratio `d`: row `i` (1-based) selects column
/// `2 + (i-1) d`; all other entries are zero.
pub fn downsample_matrix(i_h: usize, i_dim: usize, d: usize) -> Result<DenseMatrix> {
    if i_h == 0 || d == 0 {
        return Err(Error::InvalidArg("downsample needs i_h >= 1, d >= 1".into()));
    }
    let last = 2 + (i_h - 1) * d;
    if last > i_dim {
        return Err(Error::InvalidArg(format!(
            "downsample overflow: row {i_h} selects column {last} > {i_dim}"
        )));
    }
    let mut s = DenseMatrix::zeros(i_h, i_dim);
    for i in 0..i_h {
        s.set(i, 1 + i * d, 1.0);
    }
    Ok(s)
}

/// Output row count of [`downsample_matrix`] for a dimension `i_dim` and
/// ratio `d` (largest `i_h` with `2 + (i_h - 1) d <= i_dim`).
pub fn downsampled_len(i_dim: usize, d: usize) -> usize {
    if i_dim < 2 {
        0
    } else {
        (i_dim - 2) / d + 1
    }
}

/// Selection-averaging spectral response: row `r` carries `1/|range_r|`
/// on its band range and zeros elsewhere.
pub fn spectral_response(spec: &SensorSpec, k: usize) -> Result<DenseMatrix> {
    spec.validate(k)?;
    let rows = spec.band_ranges.len();
    let mut p = DenseMatrix::zeros(rows, k);
    for (r, &(start, end)) in spec.band_ranges.iter().enumerate() {
        let w = 1.0 / (end - start + 1) as f64;
        for b in start..=end {
            p.set(r, b - 1, w);
        }
    }
    Ok(p)
}

/// Provenance parameters of a degradation set.
#[derive(Clone, Debug, PartialEq)]
pub struct DegradationParams {
    pub d: usize,
    pub q: usize,
    pub sigma_blur: f64,
    pub sensor: Sensor,
}

impl DegradationParams {
    pub fn custom() -> Self {
        Self {
            d: 0,
            q: 0,
            sigma_blur: 0.0,
            sensor: Sensor::Custom,
        }
    }
}

/// The three degradation operators `P1 (I_H x I)`, `P2 (J_H x J)`,
/// `P_M (K_M x K)` plus the parameters they were built from.
#[derive(Clone, Debug)]
pub struct DegradationSet {
    pub p1: DenseMatrix,
    pub p2: DenseMatrix,
    pub pm: DenseMatrix,
    pub params: DegradationParams,
}

impl DegradationSet {
    /// Build blur-downsample spatial operators plus a sensor spectral
    /// response for an SRI of dimensions `(i, j, k)`.
    pub fn wald(
        dims: (usize, usize, usize),
        d: usize,
        q: usize,
        sigma_blur: f64,
        sensor: Sensor,
        spec: &SensorSpec,
    ) -> Result<Self> {
        let (i, j, k) = dims;
        let p1 = downsample_matrix(downsampled_len(i, d), i, d)?.matmul(&blur_matrix(i, q, sigma_blur)?);
        let p2 = downsample_matrix(downsampled_len(j, d), j, d)?.matmul(&blur_matrix(j, q, sigma_blur)?);
        let pm = spectral_response(spec, k)?;
        let set = Self {
            p1,
            p2,
            pm,
            params: DegradationParams {
                d,
                q,
                sigma_blur,
                sensor,
            },
        };
        set.check_row_rank()?;
        Ok(set)
    }

    /// Wrap explicit degradation matrices; full row rank is still required.
    pub fn from_parts(p1: DenseMatrix, p2: DenseMatrix, pm: DenseMatrix) -> Result<Self> {
        let set = Self {
            p1,
            p2,
            pm,
            params: DegradationParams::custom(),
        };
        set.check_row_rank()?;
        Ok(set)
    }

    fn check_row_rank(&self) -> Result<()> {
        for (name, m) in [("p1", &self.p1), ("p2", &self.p2), ("pm", &self.pm)] {
            if m.rows() > m.cols() {
                return Err(Error::DimMismatch(format!(
                    "{name} has more rows than columns"
                )));
            }
            let s = linalg::singular_values(m);
            let smax = s.first().copied().unwrap_or(0.0);
            if s.len() < m.rows() || s[m.rows() - 1] <= 1e-10 * smax.max(1.0) {
                return Err(Error::InvalidArg(format!("{name} is not full row rank")));
            }
        }
        Ok(())
    }

    /// Dimensions `(I_H, J_H)` of the degraded spatial grid.
    pub fn hsi_dims(&self) -> (usize, usize) {
        (self.p1.rows(), self.p2.rows())
    }

    /// Number of spectral bands after degradation.
    pub fn k_m(&self) -> usize {
        self.pm.rows()
    }

    /// Dimensions `(I, J, K)` the set expects of the reference cube.
    pub fn sri_dims(&self) -> (usize, usize, usize) {
        (self.p1.cols(), self.p2.cols(), self.pm.cols())
    }
}

/// Apply the noiseless degradation model:
/// `hsi = sri ×1 P1 ×2 P2`, `msi = sri ×3 P_M`.
pub fn degrade(sri: &DataCube, deg: &DegradationSet) -> Result<(DataCube, DataCube)> {
    if sri.dims() != deg.sri_dims() {
        return Err(Error::DimMismatch(format!(
            "degrade: cube {:?} vs operators expecting {:?}",
            sri.dims(),
            deg.sri_dims()
        )));
    }
    let hsi = mode_contract(&mode_contract(sri, &deg.p1, Mode::One)?, &deg.p2, Mode::Two)?;
    let msi = mode_contract(sri, &deg.pm, Mode::Three)?;
    Ok((hsi, msi))
}

/// Add white Gaussian noise scaled so the Frobenius signal-to-noise ratio
/// equals `snr_db` exactly. `snr_db = f64::INFINITY` returns the input
/// unchanged; the draw is deterministic in `seed`.
pub fn add_noise(t: &DataCube, snr_db: f64, seed: u64) -> Result<DataCube> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(t.clone());
    }
    let signal = t.frobenius_norm();
    if signal == 0.0 {
        return Err(Error::ZeroInput("cannot set an SNR against a zero cube"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = (0..t.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let noise_norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    // ‖t‖² / ‖alpha E‖² = 10^(snr/10) exactly after scaling
    let alpha = signal / (noise_norm * 10f64.powf(snr_db / 20.0));
    for v in &mut noise {
        *v *= alpha;
    }
    let mut out = t.clone();
    for (o, n) in out.data_mut().iter_mut().zip(&noise) {
        *o += n;
    }
    Ok(out)
}
