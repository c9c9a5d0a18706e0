//! Command handlers behind the thin argument layer in `main`.

use hsr_core::cube::DataCube;
use hsr_core::degradation::{add_noise, degrade, DegradationSet, Sensor, SensorSpec};
use hsr_core::error::Error as CoreError;
use hsr_core::experiment::{
    region_map_csv, run_sweep, svd_profile, svd_profile_csv, sweep_csv, ExperimentConfig, Method,
    SweepInputs,
};
use hsr_core::fusion::cp::{hybrid, scuba, stereo, tenrec, StereoConfig};
use hsr_core::fusion::tucker::{blind_scott, bscott, scott, ScottConfig};
use hsr_core::fusion::BlockGrid;
use hsr_core::matrix::DenseMatrix;
use hsr_core::metrics::{evaluate, extract_signatures, timed, MetricsReport};
use hsr_core::synth::{build_sri, builtin_scenario, Scenario, SignatureBank};
use hsr_core::{io, Result as CoreResult};
use std::fmt;
use std::io::Write as _;

/// CLI-level error with an exit-code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration (exit 2).
    Usage(String),
    /// Unreadable or inconsistent data (exit 3).
    Data(CoreError),
    /// Numerical failure, e.g. a singular operator (exit 4).
    Numerical(CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::SingularOperator { .. } => CliError::Numerical(e),
            CoreError::Config(msg) => CliError::Usage(msg),
            other => CliError::Data(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

// ---------------------------------------------------------------------------
// Small flag parsers
// ---------------------------------------------------------------------------

fn parse_triple(s: &str, what: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(usage(format!("{what} must be three comma-separated integers")));
    }
    let mut vals = [0usize; 3];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad integer {p:?} in {what}")))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

fn parse_pair(s: &str, what: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(usage(format!("{what} must be two comma-separated integers")));
    }
    let a = parts[0]
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad integer in {what}")))?;
    let b = parts[1]
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad integer in {what}")))?;
    Ok((a, b))
}

fn parse_blocks(s: &str) -> Result<BlockGrid> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| usage("--blocks must look like 2x2"))?;
    let b1 = a.trim().parse().map_err(|_| usage("bad block count"))?;
    let b2 = b.trim().parse().map_err(|_| usage("bad block count"))?;
    BlockGrid::new(b1, b2).map_err(|e| usage(e.to_string()))
}

/// Band ranges "1-4,5-8" (1-based, inclusive).
fn parse_band_ranges(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|part| {
            let (a, b) = part
                .trim()
                .split_once('-')
                .ok_or_else(|| usage(format!("band range {part:?} must look like 1-4")))?;
            let lo = a.trim().parse().map_err(|_| usage("bad band index"))?;
            let hi = b.trim().parse().map_err(|_| usage("bad band index"))?;
            Ok((lo, hi))
        })
        .collect()
}

fn sensor_spec_from_flags(
    sensor: Option<&str>,
    ranges: Option<&str>,
    k: usize,
) -> Result<(Sensor, SensorSpec)> {
    match (sensor, ranges) {
        (_, Some(r)) => Ok((Sensor::Custom, SensorSpec::new(parse_band_ranges(r)?))),
        (Some(name), None) => {
            let sensor = Sensor::parse(name).map_err(|e| usage(e.to_string()))?;
            let spec = SensorSpec::for_sensor(sensor, k)?;
            Ok((sensor, spec))
        }
        (None, None) => Err(usage("give either --sensor or --ranges")),
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

pub fn synth(
    scenario: &str,
    bands: usize,
    seed: u64,
    signatures: Option<&str>,
    out: &str,
) -> Result<()> {
    let scenario = Scenario::parse(scenario).map_err(|e| usage(e.to_string()))?;
    let spec = builtin_scenario(scenario);
    let bank = match signatures {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(e.into()))?;
            SignatureBank::from_csv_str(&text)?
        }
        None => SignatureBank::synthetic(spec.n_materials(), bands, seed)?,
    };
    if bank.len() < spec.n_materials() {
        return Err(usage(format!(
            "scenario {} needs {} signatures, bank has {}",
            scenario.name(),
            spec.n_materials(),
            bank.len()
        )));
    }
    let sri = build_sri(&spec.map, &bank, spec.block, spec.sigma)?;
    io::write_cube(out, &sri)?;
    let (i, j, k) = sri.dims();
    println!("wrote {out}: {i}x{j}x{k} scene {}", scenario.name());
    Ok(())
}

pub struct DegradeArgs {
    pub sri: String,
    pub d: usize,
    pub q: usize,
    pub sigma_blur: f64,
    pub sensor: Option<String>,
    pub ranges: Option<String>,
    pub snr_hsi: Option<f64>,
    pub snr_msi: Option<f64>,
    pub seed: u64,
    pub out_hsi: String,
    pub out_msi: String,
    pub out_deg: String,
}

pub fn degrade_cmd(args: DegradeArgs) -> Result<()> {
    let sri = io::read_cube(&args.sri)?;
    let (sensor, spec) =
        sensor_spec_from_flags(args.sensor.as_deref(), args.ranges.as_deref(), sri.dims().2)?;
    let deg = DegradationSet::wald(sri.dims(), args.d, args.q, args.sigma_blur, sensor, &spec)?;
    let (mut hsi, mut msi) = degrade(&sri, &deg)?;
    if let Some(snr) = args.snr_hsi {
        hsi = add_noise(&hsi, snr, args.seed)?;
    }
    if let Some(snr) = args.snr_msi {
        msi = add_noise(&msi, snr, args.seed ^ 0x5A5A_5A5A)?;
    }
    io::write_cube(&args.out_hsi, &hsi)?;
    io::write_cube(&args.out_msi, &msi)?;
    io::write_degradation(&args.out_deg, &deg)?;
    println!(
        "wrote hsi {:?} msi {:?} operators ({} -> {:?}, {} bands)",
        hsi.dims(),
        msi.dims(),
        args.sri,
        deg.hsi_dims(),
        deg.k_m()
    );
    Ok(())
}

pub struct FuseArgs {
    pub method: String,
    pub hsi: Option<String>,
    pub msi: Option<String>,
    pub deg: Option<String>,
    pub reference: Option<String>,
    pub ranks: Option<String>,
    pub cprank: Option<usize>,
    pub r3: Option<usize>,
    pub blocks: Option<String>,
    pub lambda: f64,
    pub iters: usize,
    pub out: String,
    pub metrics_out: Option<String>,
}

pub fn fuse_cmd(args: FuseArgs) -> Result<()> {
    let method = Method::parse(&args.method).map_err(|e| usage(e.to_string()))?;

    // flag contract per method family
    if method.takes_rank_triple() {
        if args.cprank.is_some() {
            return Err(usage(format!(
                "method {} takes --ranks, not --cprank",
                method.name()
            )));
        }
        if args.ranks.is_none() {
            return Err(usage(format!("method {} needs --ranks R1,R2,R3", method.name())));
        }
    } else {
        if args.ranks.is_some() {
            return Err(usage(format!(
                "method {} takes --cprank, not --ranks",
                method.name()
            )));
        }
        if args.cprank.is_none() {
            return Err(usage(format!("method {} needs --cprank F", method.name())));
        }
    }
    if matches!(method, Method::Hybrid | Method::Scuba) && args.r3.is_none() {
        return Err(usage(format!("method {} needs --r3", method.name())));
    }
    if matches!(method, Method::Bscott | Method::Scuba) && args.blocks.is_none() {
        return Err(usage(format!("method {} needs --blocks B1xB2", method.name())));
    }

    let (hsi_path, msi_path, deg_path) = match (&args.hsi, &args.msi, &args.deg) {
        (Some(h), Some(m), Some(d)) => (h, m, d),
        _ => return Err(usage("fuse needs --hsi, --msi and --deg")),
    };
    let hsi = io::read_cube(hsi_path)?;
    let msi = io::read_cube(msi_path)?;
    let deg = io::read_degradation(deg_path)?;

    let ranks = args
        .ranks
        .as_deref()
        .map(|s| parse_triple(s, "--ranks"))
        .transpose()?;
    let grid = args.blocks.as_deref().map(parse_blocks).transpose()?;

    let (estimate, elapsed) = {
        let (result, elapsed) = timed(|| -> CoreResult<DataCube> {
            match method {
                Method::Scott => {
                    let cfg = ScottConfig::new(ranks.unwrap()).with_lambda(args.lambda);
                    let out = scott(&hsi, &msi, &deg, &cfg)?;
                    if out.min_norm {
                        eprintln!(
                            "note: operator numerically singular (cond = {:.3e}); minimum-norm core used",
                            out.spectrum.cond
                        );
                    }
                    Ok(out.estimate)
                }
                Method::BlindScott => Ok(blind_scott(&hsi, &msi, &deg.pm, ranks.unwrap())?.estimate),
                Method::Bscott => {
                    Ok(bscott(&hsi, &msi, &deg.pm, ranks.unwrap(), grid.unwrap())?.estimate)
                }
                Method::Tenrec => Ok(tenrec(&hsi, &msi, &deg, args.cprank.unwrap())?.estimate),
                Method::Stereo => {
                    let f = args.cprank.unwrap();
                    let init = tenrec(&hsi, &msi, &deg, f)?;
                    let mut cfg = StereoConfig::new(f);
                    cfg.lambda = args.lambda;
                    cfg.max_iters = args.iters;
                    Ok(stereo(&hsi, &msi, &deg, &cfg, &init.model)?.estimate)
                }
                Method::Hybrid => {
                    Ok(hybrid(&hsi, &msi, &deg.pm, args.cprank.unwrap(), args.r3.unwrap())?.estimate)
                }
                Method::Scuba => Ok(scuba(
                    &hsi,
                    &msi,
                    &deg.pm,
                    args.cprank.unwrap(),
                    args.r3.unwrap(),
                    grid.unwrap(),
                )?
                .estimate),
            }
        });
        (result?, elapsed)
    };
    io::write_cube(&args.out, &estimate)?;
    println!("wrote {} ({:.3}s, method {})", args.out, elapsed, method.name());

    if let Some(ref_path) = &args.reference {
        let reference = io::read_cube(ref_path)?;
        let report = evaluate(&reference, &estimate, deg.params.d.max(1), elapsed)?;
        let params = match (ranks, args.cprank) {
            (Some((a, b, c)), _) => format!("{a}x{b}x{c}"),
            (None, Some(f)) => format!("F={f}"),
            _ => String::new(),
        };
        let row = metrics_row(method.name(), &params, &report);
        println!("{}", metrics_header());
        println!("{row}");
        if let Some(path) = &args.metrics_out {
            append_metrics_row(path, &row)?;
        }
    }
    Ok(())
}

fn metrics_header() -> &'static str {
    "method,params,r_snr,cc,sam,ergas,time_s"
}

fn metrics_row(method: &str, params: &str, m: &MetricsReport) -> String {
    format!(
        "{method},{params},{:.6e},{:.6e},{:.6e},{:.6e},{:.6}",
        m.r_snr, m.cc, m.sam, m.ergas, m.wall_time
    )
}

fn append_metrics_row(path: &str, row: &str) -> Result<()> {
    let need_header = !std::path::Path::new(path).exists();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Data(e.into()))?;
    if need_header {
        writeln!(file, "{}", metrics_header()).map_err(|e| CliError::Data(e.into()))?;
    }
    writeln!(file, "{row}").map_err(|e| CliError::Data(e.into()))?;
    Ok(())
}

pub fn metrics_cmd(
    ref_path: &str,
    est_path: &str,
    d: usize,
    label: &str,
    out: Option<&str>,
) -> Result<()> {
    let reference = io::read_cube(ref_path)?;
    let estimate = io::read_cube(est_path)?;
    let report = evaluate(&reference, &estimate, d, 0.0)?;
    let row = metrics_row(label, "", &report);
    println!("{}", metrics_header());
    println!("{row}");
    if let Some(path) = out {
        append_metrics_row(path, &row)?;
    }
    Ok(())
}

pub fn sweep_cmd(config_path: &str, out: &str) -> Result<()> {
    let text = std::fs::read_to_string(config_path).map_err(|e| CliError::Data(e.into()))?;
    let cfg = ExperimentConfig::from_toml_str(&text)?;
    let inputs = resolve_inputs(&cfg)?;
    let spec = cfg.sweep_spec()?;
    let rows = run_sweep(&inputs, &spec)?;
    std::fs::write(out, sweep_csv(&rows)).map_err(|e| CliError::Data(e.into()))?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!("wrote {out}: {} rows ({failed} failed points)", rows.len());
    Ok(())
}

fn resolve_inputs(cfg: &ExperimentConfig) -> Result<SweepInputs> {
    if let Some(sri_path) = &cfg.input.sri {
        let sri = io::read_cube(sri_path)?;
        let deg_section = cfg
            .degradation
            .as_ref()
            .ok_or_else(|| usage("sri input needs a [degradation] section"))?;
        let deg = deg_section.build(sri.dims())?;
        let (hsi, msi) = degrade(&sri, &deg)?;
        Ok(SweepInputs {
            reference: Some(sri),
            hsi,
            msi,
            deg,
        })
    } else {
        let hsi = io::read_cube(cfg.input.hsi.as_ref().unwrap())?;
        let msi = io::read_cube(cfg.input.msi.as_ref().unwrap())?;
        let deg = io::read_degradation(cfg.input.deg.as_ref().unwrap())?;
        Ok(SweepInputs {
            reference: None,
            hsi,
            msi,
            deg,
        })
    }
}

pub fn svd_profile_cmd(hsi_path: &str, msi_path: &str, top: usize, out: &str) -> Result<()> {
    let hsi = io::read_cube(hsi_path)?;
    let msi = io::read_cube(msi_path)?;
    let profile = svd_profile(&hsi, &msi, top);
    std::fs::write(out, svd_profile_csv(&profile)).map_err(|e| CliError::Data(e.into()))?;
    println!("wrote {out}");
    Ok(())
}

pub fn region_map_cmd(
    dims: &str,
    hsi_dims: &str,
    km: usize,
    r1: &str,
    r3: &str,
    out: &str,
) -> Result<()> {
    let dims = parse_triple(dims, "--dims")?;
    let hsi_dims = parse_pair(hsi_dims, "--hsi-dims")?;
    let r1 = parse_pair(r1, "--r1")?;
    let r3 = parse_pair(r3, "--r3")?;
    if r1.0 > r1.1 || r3.0 > r3.1 || r1.0 == 0 || r3.0 == 0 {
        return Err(usage("rank ranges must be nonempty and start at 1 or above"));
    }
    let csv = region_map_csv(dims, hsi_dims, km, r1, r3);
    std::fs::write(out, csv).map_err(|e| CliError::Data(e.into()))?;
    println!("wrote {out}");
    Ok(())
}

pub fn ingest_cmd(input: &str, format: &str, dims: &str, out: &str) -> Result<()> {
    let format = io::IngestFormat::parse(format).map_err(|e| usage(e.to_string()))?;
    let dims = parse_triple(dims, "--dims")?;
    let raw = std::fs::read(input).map_err(|e| CliError::Data(e.into()))?;
    let cube = io::ingest_bytes(&raw, format, dims)?;
    io::write_cube(out, &cube)?;
    println!("wrote {out}: {:?}", cube.dims());
    Ok(())
}

pub fn signatures_cmd(sri_path: &str, labels_path: &str, out: &str) -> Result<()> {
    let sri = io::read_cube(sri_path)?;
    let text = std::fs::read_to_string(labels_path).map_err(|e| CliError::Data(e.into()))?;
    let labels = parse_label_csv(&text)?;
    let (bank, empty) = extract_signatures(&sri, &labels)?;
    std::fs::write(out, bank.to_csv_string()).map_err(|e| CliError::Data(e.into()))?;
    if !empty.is_empty() {
        eprintln!("note: labels without pixels: {empty:?}");
    }
    println!("wrote {out}: {} signatures", bank.len());
    Ok(())
}

fn parse_label_csv(text: &str) -> Result<DenseMatrix> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            line.split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| usage(format!("bad label {f:?}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(usage("label CSV is empty"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(usage("label CSV rows have unequal lengths"));
    }
    Ok(DenseMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}
