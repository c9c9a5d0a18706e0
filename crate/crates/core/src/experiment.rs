//! Experiment drivers: rank/tensor-rank sweeps, singular-value profiles
//! and recoverability region maps, all emitted as deterministic CSV.

use crate::cube::{unfold, DataCube, Mode};
use crate::degradation::{add_noise, DegradationSet, Sensor, SensorSpec};
use crate::error::{Error, Result};
use crate::fusion::cp::{hybrid, scuba, stereo, tenrec, StereoConfig};
use crate::fusion::tucker::{blind_scott, bscott, scott, tucker_cost, ScottConfig};
use crate::fusion::BlockGrid;
use crate::linalg::singular_values;
use crate::metrics::{evaluate, timed};
use crate::recoverability::classify_generic;
use rayon::prelude::*;
use serde::Deserialize;

/// Fusion method selector shared by the sweep engine and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Scott,
    BlindScott,
    Bscott,
    Tenrec,
    Stereo,
    Hybrid,
    Scuba,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "scott" => Ok(Method::Scott),
            "blindscott" | "blind-scott" | "blind_scott" => Ok(Method::BlindScott),
            "bscott" | "b-scott" => Ok(Method::Bscott),
            "tenrec" => Ok(Method::Tenrec),
            "stereo" => Ok(Method::Stereo),
            "hybrid" => Ok(Method::Hybrid),
            "scuba" => Ok(Method::Scuba),
            other => Err(Error::InvalidArg(format!("unknown method {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Scott => "scott",
            Method::BlindScott => "blindscott",
            Method::Bscott => "bscott",
            Method::Tenrec => "tenrec",
            Method::Stereo => "stereo",
            Method::Hybrid => "hybrid",
            Method::Scuba => "scuba",
        }
    }

    /// Tucker methods take a rank triple; the CP family takes a tensor
    /// rank.
    pub fn takes_rank_triple(self) -> bool {
        matches!(self, Method::Scott | Method::BlindScott | Method::Bscott)
    }
}

/// In-memory inputs of an experiment: observations, operators, and the
/// reference cube when metrics are wanted.
#[derive(Clone, Debug)]
pub struct SweepInputs {
    pub reference: Option<DataCube>,
    pub hsi: DataCube,
    pub msi: DataCube,
    pub deg: DegradationSet,
}

/// The grid to sweep: either rank triples (`r2` tied to `r1` unless
/// given) or tensor ranks.
#[derive(Clone, Debug)]
pub enum SweepGrid {
    Tucker {
        r1: (usize, usize),
        r2: Option<(usize, usize)>,
        r3: (usize, usize),
    },
    Cp {
        f: (usize, usize),
    },
}

/// A full sweep specification.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub method: Method,
    pub grid: SweepGrid,
    pub lambda: f64,
    /// Subsampling ratio used by the relative-global-error metric.
    pub ergas_d: usize,
    pub snr_hsi: Option<f64>,
    pub snr_msi: Option<f64>,
    pub seed: u64,
    /// Block grid for the blocked methods.
    pub blocks: Option<(usize, usize)>,
    /// Spectral rank for hybrid/scuba.
    pub r3: Option<usize>,
    /// Iteration budget for the alternating methods.
    pub stereo_iters: usize,
}

/// One grid point of a sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub method: &'static str,
    pub r1: Option<usize>,
    pub r2: Option<usize>,
    pub r3: Option<usize>,
    pub f: Option<usize>,
    pub region: &'static str,
    pub status: String,
    pub r_snr: Option<f64>,
    pub cc: Option<f64>,
    pub sam: Option<f64>,
    pub ergas: Option<f64>,
    pub cond: Option<f64>,
    pub f_t: Option<f64>,
    pub time_s: f64,
}

/// Split-mix style hash for deriving independent per-point seeds from
/// the master seed and grid coordinates.
fn point_seed(master: u64, coords: &[usize]) -> u64 {
    let mut z = master ^ 0x9E37_79B9_7F4A_7C15;
    for &c in coords {
        z = z.wrapping_add(c as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z ^= z >> 27;
    }
    z = (z ^ (z >> 31)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 29)
}

fn enumerate_points(grid: &SweepGrid) -> Vec<(Option<(usize, usize, usize)>, Option<usize>)> {
    match grid {
        SweepGrid::Tucker { r1, r2, r3 } => {
            let mut out = Vec::new();
            for a in r1.0..=r1.1 {
                let r2_range = r2.unwrap_or((a, a));
                for b in r2_range.0..=r2_range.1 {
                    for c in r3.0..=r3.1 {
                        out.push((Some((a, b, c)), None));
                    }
                }
            }
            out
        }
        SweepGrid::Cp { f } => (f.0..=f.1).map(|v| (None, Some(v))).collect(),
    }
}

fn run_point(
    inputs: &SweepInputs,
    spec: &SweepSpec,
    ranks: Option<(usize, usize, usize)>,
    f: Option<usize>,
) -> SweepRow {
    let dims = inputs.deg.sri_dims();
    let hsi_dims = inputs.deg.hsi_dims();
    let k_m = inputs.deg.k_m();
    let coords = match (ranks, f) {
        (Some((a, b, c)), _) => vec![a, b, c],
        (None, Some(v)) => vec![v],
        _ => vec![],
    };
    let label_ranks = ranks.unwrap_or_else(|| {
        let v = f.unwrap_or(1);
        (v.min(dims.0), v.min(dims.1), v.min(dims.2))
    });
    let region = classify_generic(dims, hsi_dims, k_m, label_ranks).as_str();

    let mut row = SweepRow {
        method: spec.method.name(),
        r1: ranks.map(|r| r.0),
        r2: ranks.map(|r| r.1),
        r3: ranks.map(|r| r.2).or(spec.r3),
        f,
        region,
        status: "ok".into(),
        r_snr: None,
        cc: None,
        sam: None,
        ergas: None,
        cond: None,
        f_t: None,
        time_s: 0.0,
    };

    // Fresh noisy observations per point, independently seeded.
    let seed = point_seed(spec.seed, &coords);
    let hsi = match spec.snr_hsi {
        Some(snr) => match add_noise(&inputs.hsi, snr, seed) {
            Ok(c) => c,
            Err(e) => {
                row.status = format!("error: {e}");
                return row;
            }
        },
        None => inputs.hsi.clone(),
    };
    let msi = match spec.snr_msi {
        Some(snr) => match add_noise(&inputs.msi, snr, seed ^ 0x5A5A_5A5A) {
            Ok(c) => c,
            Err(e) => {
                row.status = format!("error: {e}");
                return row;
            }
        },
        None => inputs.msi.clone(),
    };

    let grid = spec
        .blocks
        .map(|(b1, b2)| BlockGrid::new(b1, b2))
        .transpose();
    let grid = match grid {
        Ok(g) => g,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };

    let (outcome, elapsed) = timed(|| -> Result<(DataCube, Option<f64>)> {
        match spec.method {
            Method::Scott => {
                let ranks = ranks.ok_or_else(|| Error::Config("scott needs ranks".into()))?;
                let out = scott(
                    &hsi,
                    &msi,
                    &inputs.deg,
                    &ScottConfig::new(ranks).with_lambda(spec.lambda),
                )?;
                Ok((out.estimate, Some(out.spectrum.cond)))
            }
            Method::BlindScott => {
                let ranks = ranks.ok_or_else(|| Error::Config("blindscott needs ranks".into()))?;
                let out = blind_scott(&hsi, &msi, &inputs.deg.pm, ranks)?;
                Ok((out.estimate, None))
            }
            Method::Bscott => {
                let ranks = ranks.ok_or_else(|| Error::Config("bscott needs ranks".into()))?;
                let g = grid.ok_or_else(|| Error::Config("bscott needs blocks".into()))?;
                let out = bscott(&hsi, &msi, &inputs.deg.pm, ranks, g)?;
                Ok((out.estimate, None))
            }
            Method::Tenrec => {
                let f = f.ok_or_else(|| Error::Config("tenrec needs a tensor rank".into()))?;
                let out = tenrec(&hsi, &msi, &inputs.deg, f)?;
                Ok((out.estimate, None))
            }
            Method::Stereo => {
                let f = f.ok_or_else(|| Error::Config("stereo needs a tensor rank".into()))?;
                let init = tenrec(&hsi, &msi, &inputs.deg, f)?;
                let mut cfg = StereoConfig::new(f);
                cfg.lambda = spec.lambda;
                cfg.max_iters = spec.stereo_iters;
                let out = stereo(&hsi, &msi, &inputs.deg, &cfg, &init.model)?;
                Ok((out.estimate, None))
            }
            Method::Hybrid => {
                let f = f.ok_or_else(|| Error::Config("hybrid needs a tensor rank".into()))?;
                let r3 = spec.r3.ok_or_else(|| Error::Config("hybrid needs r3".into()))?;
                let out = hybrid(&hsi, &msi, &inputs.deg.pm, f, r3)?;
                Ok((out.estimate, None))
            }
            Method::Scuba => {
                let f = f.ok_or_else(|| Error::Config("scuba needs a tensor rank".into()))?;
                let r3 = spec.r3.ok_or_else(|| Error::Config("scuba needs r3".into()))?;
                let g = grid.ok_or_else(|| Error::Config("scuba needs blocks".into()))?;
                let out = scuba(&hsi, &msi, &inputs.deg.pm, f, r3, g)?;
                Ok((out.estimate, None))
            }
        }
    });
    row.time_s = elapsed;

    match outcome {
        Ok((estimate, cond)) => {
            row.cond = cond;
            row.f_t = tucker_cost(&estimate, &hsi, &msi, &inputs.deg, spec.lambda).ok();
            if let Some(reference) = &inputs.reference {
                match evaluate(reference, &estimate, spec.ergas_d, elapsed) {
                    Ok(rep) => {
                        row.r_snr = Some(rep.r_snr);
                        row.cc = Some(rep.cc);
                        row.sam = Some(rep.sam);
                        row.ergas = Some(rep.ergas);
                    }
                    Err(e) => row.status = format!("metrics error: {e}"),
                }
            }
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

/// Run a sweep; rows come back in grid order regardless of scheduling.
pub fn run_sweep(inputs: &SweepInputs, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let points = enumerate_points(&spec.grid);
    if points.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    Ok(points
        .par_iter()
        .map(|(ranks, f)| run_point(inputs, spec, *ranks, *f))
        .collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.12e}"),
        Some(_) => "inf".into(),
        None => String::new(),
    }
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV serialization of sweep rows (header included).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("method,r1,r2,r3,f,region,status,r_snr,cc,sam,ergas,cond,f_t,time_s\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6}\n",
            r.method,
            fmt_opt_usize(r.r1),
            fmt_opt_usize(r.r2),
            fmt_opt_usize(r.r3),
            fmt_opt_usize(r.f),
            r.region,
            r.status.replace(',', ";"),
            fmt_opt(r.r_snr),
            fmt_opt(r.cc),
            fmt_opt(r.sam),
            fmt_opt(r.ergas),
            fmt_opt(r.cond),
            fmt_opt(r.f_t),
            r.time_s,
        ));
    }
    out
}

/// Leading singular values of the MSI mode-1/2 and HSI mode-3 unfoldings.
pub fn svd_profile(hsi: &DataCube, msi: &DataCube, top: usize) -> Vec<(&'static str, Vec<f64>)> {
    let mut out = Vec::new();
    for (name, m) in [
        ("msi_mode1", unfold(msi, Mode::One)),
        ("msi_mode2", unfold(msi, Mode::Two)),
        ("hsi_mode3", unfold(hsi, Mode::Three)),
    ] {
        let mut s = singular_values(&m);
        s.truncate(top);
        out.push((name, s));
    }
    out
}

/// CSV serialization of a singular-value profile.
pub fn svd_profile_csv(profile: &[(&'static str, Vec<f64>)]) -> String {
    let mut out = String::from("unfolding,index,sigma\n");
    for (name, values) in profile {
        for (i, v) in values.iter().enumerate() {
            out.push_str(&format!("{name},{},{v:.12e}\n", i + 1));
        }
    }
    out
}

/// Region map over `(r1 = r2, r3)` as CSV rows `r1,r3,label`.
pub fn region_map_csv(
    dims: (usize, usize, usize),
    hsi_dims: (usize, usize),
    k_m: usize,
    r1_range: (usize, usize),
    r3_range: (usize, usize),
) -> String {
    let mut out = String::from("r1,r3,label\n");
    for r1 in r1_range.0..=r1_range.1 {
        for r3 in r3_range.0..=r3_range.1 {
            let label = classify_generic(dims, hsi_dims, k_m, (r1, r1, r3));
            out.push_str(&format!("{r1},{r3},{}\n", label.as_str()));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// TOML experiment configuration
// ---------------------------------------------------------------------------

/// On-disk experiment configuration (TOML).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: String,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    /// Block grid `[b1, b2]` for the blocked methods.
    pub blocks: Option<[usize; 2]>,
    /// Spectral rank for hybrid/scuba.
    pub r3: Option<usize>,
    #[serde(default = "default_stereo_iters")]
    pub stereo_iters: usize,
    pub input: InputSection,
    pub degradation: Option<DegradationSection>,
    pub noise: Option<NoiseSection>,
    pub grid: GridSection,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_stereo_iters() -> usize {
    25
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    /// Reference cube; degraded observations are generated from it.
    pub sri: Option<String>,
    /// Pre-degraded observations plus their operator file.
    pub hsi: Option<String>,
    pub msi: Option<String>,
    pub deg: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSection {
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default = "default_sigma_blur")]
    pub sigma_blur: f64,
    pub sensor: Option<String>,
    /// Explicit 1-based inclusive band ranges for a custom sensor.
    pub ranges: Option<Vec<[usize; 2]>>,
}

pub fn default_d() -> usize {
    4
}

pub fn default_q() -> usize {
    9
}

pub fn default_sigma_blur() -> f64 {
    2.0
}

impl DegradationSection {
    /// Build the degradation set for a cube of dimensions `dims`.
    pub fn build(&self, dims: (usize, usize, usize)) -> Result<DegradationSet> {
        let (sensor, spec) = self.sensor_spec(dims.2)?;
        DegradationSet::wald(dims, self.d, self.q, self.sigma_blur, sensor, &spec)
    }

    pub fn sensor_spec(&self, k: usize) -> Result<(Sensor, SensorSpec)> {
        match (&self.sensor, &self.ranges) {
            (_, Some(ranges)) => Ok((
                Sensor::Custom,
                SensorSpec::new(ranges.iter().map(|r| (r[0], r[1])).collect()),
            )),
            (Some(name), None) => {
                let sensor = Sensor::parse(name)?;
                Ok((sensor, SensorSpec::for_sensor(sensor, k)?))
            }
            (None, None) => Err(Error::Config(
                "degradation needs either a sensor name or explicit ranges".into(),
            )),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub snr_hsi: Option<f64>,
    pub snr_msi: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub r1: Option<[usize; 2]>,
    pub r2: Option<[usize; 2]>,
    pub r3: Option<[usize; 2]>,
    pub f: Option<[usize; 2]>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        Method::parse(&self.method)?;
        let by_sri = self.input.sri.is_some();
        let by_parts =
            self.input.hsi.is_some() || self.input.msi.is_some() || self.input.deg.is_some();
        if by_sri == by_parts {
            return Err(Error::Config(
                "exactly one input mode: either sri, or hsi+msi+deg".into(),
            ));
        }
        if by_parts && (self.input.hsi.is_none() || self.input.msi.is_none() || self.input.deg.is_none())
        {
            return Err(Error::Config("hsi, msi and deg must all be given".into()));
        }
        if by_sri && self.degradation.is_none() {
            return Err(Error::Config(
                "sri input needs a [degradation] section".into(),
            ));
        }
        self.sweep_grid()?;
        Ok(())
    }

    /// The grid this config describes.
    pub fn sweep_grid(&self) -> Result<SweepGrid> {
        let method = Method::parse(&self.method)?;
        let g = &self.grid;
        if method.takes_rank_triple() {
            match (g.r1, g.r3, g.f) {
                (Some(r1), Some(r3), None) => Ok(SweepGrid::Tucker {
                    r1: (r1[0], r1[1]),
                    r2: g.r2.map(|r| (r[0], r[1])),
                    r3: (r3[0], r3[1]),
                }),
                _ => Err(Error::Config(format!(
                    "method {} sweeps rank triples: give grid.r1 and grid.r3 (not f)",
                    method.name()
                ))),
            }
        } else {
            match (g.f, g.r1, g.r3) {
                (Some(f), None, None) => Ok(SweepGrid::Cp { f: (f[0], f[1]) }),
                _ => Err(Error::Config(format!(
                    "method {} sweeps tensor ranks: give grid.f only",
                    method.name()
                ))),
            }
        }
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        Ok(SweepSpec {
            method: Method::parse(&self.method)?,
            grid: self.sweep_grid()?,
            lambda: self.lambda,
            ergas_d: self.degradation.as_ref().map_or(default_d(), |d| d.d),
            snr_hsi: self.noise.as_ref().and_then(|n| n.snr_hsi),
            snr_msi: self.noise.as_ref().and_then(|n| n.snr_msi),
            seed: self.seed,
            blocks: self.blocks.map(|b| (b[0], b[1])),
            r3: self.r3,
            stereo_iters: self.stereo_iters,
        })
    }
}
