//! Synthetic scene generation: a parcel map assigns at most one material
//! per spatial block, each occupied block carries a Gaussian abundance
//! bump, and the cube is the sum of abundance-map/signature outer
//! products.

use crate::cube::DataCube;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::model::CPModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Grid of material indices; `0` marks an empty block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParcelMap {
    grid: Vec<u32>,
    rows: usize,
    cols: usize,
}

impl ParcelMap {
    pub fn new(rows: Vec<Vec<u32>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidArg("parcel map must be a nonempty grid".into()));
        }
        let grid: Vec<u32> = rows.into_iter().flatten().collect();
        if grid.iter().all(|&v| v == 0) {
            return Err(Error::InvalidArg("parcel map has no occupied block".into()));
        }
        Ok(Self {
            grid,
            rows: nrows,
            cols: ncols,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Material index at cell `(r, c)`, `0` when empty.
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.grid[r * self.cols + c]
    }

    /// Highest material index referenced by the map.
    pub fn n_materials(&self) -> usize {
        self.grid.iter().copied().max().unwrap_or(0) as usize
    }
}

/// Bank of `N` spectral signatures, each of length `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureBank {
    signatures: Vec<Vec<f64>>,
    names: Vec<String>,
}

impl SignatureBank {
    pub fn new(signatures: Vec<Vec<f64>>, names: Vec<String>) -> Result<Self> {
        if signatures.is_empty() {
            return Err(Error::InvalidArg("signature bank is empty".into()));
        }
        let k = signatures[0].len();
        if k == 0 || signatures.iter().any(|s| s.len() != k) {
            return Err(Error::InvalidArg(
                "signatures must share a nonzero length".into(),
            ));
        }
        if signatures.iter().any(|s| s.iter().all(|&v| v == 0.0)) {
            return Err(Error::InvalidArg("zero signature in bank".into()));
        }
        if names.len() != signatures.len() {
            return Err(Error::InvalidArg("one name per signature required".into()));
        }
        Ok(Self { signatures, names })
    }

    pub fn with_default_names(signatures: Vec<Vec<f64>>) -> Result<Self> {
        let names = (1..=signatures.len()).map(|n| format!("material_{n}")).collect();
        Self::new(signatures, names)
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    /// Signature length (number of bands).
    pub fn bands(&self) -> usize {
        self.signatures[0].len()
    }

    /// Signature of material `n` (1-based).
    pub fn get(&self, n: usize) -> &[f64] {
        &self.signatures[n - 1]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Deterministic smooth synthetic spectra: a positive baseline plus a
    /// few Gaussian bumps per material. Generic draws are linearly
    /// independent, which is all the fusion tests need.
    pub fn synthetic(n: usize, k: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut signatures = Vec::with_capacity(n);
        for _ in 0..n {
            let mut s = vec![0.0; k];
            let baseline: f64 = rng.random_range(0.2..0.6);
            for v in s.iter_mut() {
                *v = baseline;
            }
            for _ in 0..3 {
                let centre: f64 = rng.random_range(0.0..k as f64);
                let width: f64 = rng.random_range(0.05..0.25) * k as f64;
                let amp: f64 = rng.random_range(0.2..1.0);
                for (b, v) in s.iter_mut().enumerate() {
                    let z = (b as f64 - centre) / width;
                    *v += amp * (-0.5 * z * z).exp();
                }
            }
            signatures.push(s);
        }
        Self::with_default_names(signatures)
    }

    /// Parse a CSV with one signature per column and a header of material
    /// names.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArg("empty signature CSV".into()))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let n = names.len();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n];
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n {
                return Err(Error::InvalidArg(format!(
                    "signature CSV row {} has {} fields, expected {n}",
                    lineno + 2,
                    fields.len()
                )));
            }
            for (col, field) in fields.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidArg(format!("bad number {field:?} in signature CSV"))
                })?;
                columns[col].push(v);
            }
        }
        Self::new(columns, names)
    }

    /// Serialize in the format read by [`SignatureBank::from_csv_str`].
    pub fn to_csv_string(&self) -> String {
        let mut out = self.names.join(",");
        out.push('\n');
        for b in 0..self.bands() {
            let row: Vec<String> = self.signatures.iter().map(|s| format!("{}", s[b])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// One-dimensional centred Gaussian profile of length `n`, peak 1 at the
/// centre `(n + 1) / 2` (1-based).
fn gaussian_profile(n: usize, sigma: f64) -> Vec<f64> {
    let centre = (n as f64 + 1.0) / 2.0;
    (1..=n)
        .map(|i| {
            let z = i as f64 - centre;
            (-z * z / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Centred separable Gaussian bump `H[i,j]`, unnormalized, peak value 1
/// at the centre for odd dimensions.
pub fn gaussian_blob(h: usize, w: usize, sigma: f64) -> DenseMatrix {
    let gh = gaussian_profile(h, sigma);
    let gw = gaussian_profile(w, sigma);
    DenseMatrix::from_fn(h, w, |i, j| gh[i] * gw[j])
}

fn check_build_args(map: &ParcelMap, bank: &SignatureBank) -> Result<()> {
    if map.n_materials() > bank.len() {
        return Err(Error::InvalidArg(format!(
            "parcel map references material {} but bank has {}",
            map.n_materials(),
            bank.len()
        )));
    }
    Ok(())
}

/// Assemble the synthetic cube: each occupied `bh x bw` block carries the
/// Gaussian abundance bump times its material signature.
pub fn build_sri(
    map: &ParcelMap,
    bank: &SignatureBank,
    block: (usize, usize),
    sigma: f64,
) -> Result<DataCube> {
    check_build_args(map, bank)?;
    let (bh, bw) = block;
    let blob = gaussian_blob(bh, bw, sigma);
    let (i, j, k) = (map.rows() * bh, map.cols() * bw, bank.bands());
    let mut cube = DataCube::zeros((i, j, k));
    for cr in 0..map.rows() {
        for cc in 0..map.cols() {
            let material = map.get(cr, cc);
            if material == 0 {
                continue;
            }
            let s = bank.get(material as usize);
            for lj in 0..bw {
                for li in 0..bh {
                    let a = blob.get(li, lj);
                    for (b, sv) in s.iter().enumerate() {
                        cube.set(cr * bh + li, cc * bw + lj, b, a * sv);
                    }
                }
            }
        }
    }
    Ok(cube)
}

/// Polyadic factors of the synthetic cube: one rank-one term per occupied
/// block (the abundance bump is separable), so the model reconstructs
/// [`build_sri`] exactly.
pub fn build_sri_cp_factors(
    map: &ParcelMap,
    bank: &SignatureBank,
    block: (usize, usize),
    sigma: f64,
) -> Result<CPModel> {
    check_build_args(map, bank)?;
    let (bh, bw) = block;
    let gh = gaussian_profile(bh, sigma);
    let gw = gaussian_profile(bw, sigma);
    let (i, j) = (map.rows() * bh, map.cols() * bw);
    let mut cols_a: Vec<(usize, usize)> = Vec::new(); // (cell row, material)
    let mut cols_b: Vec<usize> = Vec::new();
    let mut mats: Vec<usize> = Vec::new();
    for cr in 0..map.rows() {
        for cc in 0..map.cols() {
            let material = map.get(cr, cc);
            if material != 0 {
                cols_a.push((cr, material as usize));
                cols_b.push(cc);
                mats.push(material as usize);
            }
        }
    }
    let f = mats.len();
    let a = DenseMatrix::from_fn(i, f, |r, c| {
        let (cell, _) = cols_a[c];
        if r / bh == cell {
            gh[r % bh]
        } else {
            0.0
        }
    });
    let b = DenseMatrix::from_fn(j, f, |r, c| {
        if r / bw == cols_b[c] {
            gw[r % bw]
        } else {
            0.0
        }
    });
    let c = DenseMatrix::from_fn(bank.bands(), f, |r, cidx| bank.get(mats[cidx])[r]);
    CPModel::new(a, b, c)
}

/// Built-in synthetic scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Two materials on a 2x2 map with one vacant block; 60x60 blocks,
    /// blob width 20. The spatial modes have rank 2 but the core is a
    /// rank-3 tensor, so low-rank polyadic fits degenerate.
    N2,
    /// Seven materials on an anti-diagonal 4x4 map; 20x20 blocks.
    N7Antidiag,
    /// Six materials with two diagonal blocks each; 10x10 blocks, blob
    /// width 4. Polyadic rank 12 against multilinear rank (12, 12, 6).
    BlockN6,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Scenario> {
        match s.to_ascii_lowercase().as_str() {
            "n2" => Ok(Scenario::N2),
            "n7-antidiag" | "n7_antidiag" | "n7" => Ok(Scenario::N7Antidiag),
            "block-n6" | "block_n6" | "blockn6" => Ok(Scenario::BlockN6),
            other => Err(Error::InvalidArg(format!("unknown scenario {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::N2 => "n2",
            Scenario::N7Antidiag => "n7-antidiag",
            Scenario::BlockN6 => "block-n6",
        }
    }
}

/// Parcel map, block dimensions and blob width of a scenario.
#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub map: ParcelMap,
    pub block: (usize, usize),
    pub sigma: f64,
}

impl ScenarioSpec {
    /// Number of materials the scenario needs in its signature bank.
    pub fn n_materials(&self) -> usize {
        self.map.n_materials()
    }

    /// Spatial dimensions of the generated cube.
    pub fn spatial_dims(&self) -> (usize, usize) {
        (
            self.map.rows() * self.block.0,
            self.map.cols() * self.block.1,
        )
    }
}

/// The published configurations of the built-in scenarios.
pub fn builtin_scenario(scenario: Scenario) -> ScenarioSpec {
    match scenario {
        Scenario::N2 => ScenarioSpec {
            map: ParcelMap::new(vec![vec![1, 2], vec![2, 0]]).expect("static map"),
            block: (60, 60),
            sigma: 20.0,
        },
        Scenario::N7Antidiag => ScenarioSpec {
            map: ParcelMap::new(vec![
                vec![1, 2, 3, 4],
                vec![2, 3, 4, 5],
                vec![3, 4, 5, 6],
                vec![4, 5, 6, 7],
            ])
            .expect("static map"),
            block: (20, 20),
            // blob width is a free parameter here; one third of the block
            // keeps the bumps well inside their cells
            sigma: 20.0 / 3.0,
        },
        Scenario::BlockN6 => {
            let mut rows = vec![vec![0u32; 12]; 12];
            for n in 1..=6u32 {
                let base = (n as usize - 1) * 2;
                rows[base][base] = n;
                rows[base + 1][base + 1] = n;
            }
            ScenarioSpec {
                map: ParcelMap::new(rows).expect("static map"),
                block: (10, 10),
                sigma: 4.0,
            }
        }
    }
}
