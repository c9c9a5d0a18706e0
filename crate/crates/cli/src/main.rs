//! `hsr` — degrade, fuse and evaluate hyperspectral/multispectral image
//! pairs with coupled-tensor models.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 numerical failure.

mod commands;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hsr", version, about = "Coupled-tensor hyperspectral super-resolution")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a built-in synthetic scene as a cube file.
    Synth {
        /// Scenario name: n2, n7-antidiag, block-n6.
        #[arg(long)]
        scenario: String,
        /// Number of spectral bands for synthetic signatures.
        #[arg(long, default_value_t = 32)]
        bands: usize,
        /// Seed for the synthetic signature bank.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Signature CSV (one column per material); overrides --bands/--seed.
        #[arg(long)]
        signatures: Option<String>,
        #[arg(long)]
        out: String,
    },
    /// Degrade a reference cube into an HSI/MSI pair plus operator file.
    Degrade {
        #[arg(long)]
        sri: String,
        /// Spatial downsampling ratio.
        #[arg(long, default_value_t = 4)]
        d: usize,
        /// Blur kernel size (odd).
        #[arg(long, default_value_t = 9)]
        q: usize,
        #[arg(long, default_value_t = 2.0)]
        sigma_blur: f64,
        /// Sensor: landsat, quickbird, pan (or use --ranges).
        #[arg(long)]
        sensor: Option<String>,
        /// Custom 1-based inclusive band ranges, e.g. "1-4,5-8".
        #[arg(long)]
        ranges: Option<String>,
        /// Input SNR (dB) of white Gaussian noise added to the HSI.
        #[arg(long)]
        snr_hsi: Option<f64>,
        /// Input SNR (dB) of white Gaussian noise added to the MSI.
        #[arg(long)]
        snr_msi: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_hsi: String,
        #[arg(long)]
        out_msi: String,
        #[arg(long)]
        out_deg: String,
    },
    /// Fuse an HSI/MSI pair into a super-resolution estimate.
    Fuse {
        /// scott, blindscott, bscott, tenrec, stereo, hybrid, scuba.
        #[arg(long)]
        method: String,
        #[arg(long)]
        hsi: Option<String>,
        #[arg(long)]
        msi: Option<String>,
        #[arg(long)]
        deg: Option<String>,
        /// Reference cube; triggers a metrics row.
        #[arg(long)]
        r#ref: Option<String>,
        /// Rank triple for the coupled Tucker methods, e.g. "4,4,6".
        #[arg(long)]
        ranks: Option<String>,
        /// Tensor rank for the CP methods.
        #[arg(long)]
        cprank: Option<usize>,
        /// Spectral rank for hybrid/scuba.
        #[arg(long)]
        r3: Option<usize>,
        /// Block grid for bscott/scuba, e.g. "2x2".
        #[arg(long)]
        blocks: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Iteration budget for stereo.
        #[arg(long, default_value_t = 25)]
        iters: usize,
        #[arg(long)]
        out: String,
        /// Append the metrics row to this CSV (header written if new).
        #[arg(long)]
        metrics_out: Option<String>,
    },
    /// Evaluate an estimate against a reference.
    Metrics {
        #[arg(long)]
        r#ref: String,
        #[arg(long)]
        est: String,
        /// Subsampling ratio entering the relative global error.
        #[arg(long, default_value_t = 4)]
        d: usize,
        /// Method label for the CSV row.
        #[arg(long, default_value = "unknown")]
        label: String,
        #[arg(long)]
        out: Option<String>,
    },
    /// Run a rank or tensor-rank sweep from a TOML config.
    Sweep {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: String,
    },
    /// Leading singular values of the coupled unfoldings.
    SvdProfile {
        #[arg(long)]
        hsi: String,
        #[arg(long)]
        msi: String,
        #[arg(long, default_value_t = 15)]
        top: usize,
        #[arg(long)]
        out: String,
    },
    /// Recoverability region map over (r1 = r2, r3).
    RegionMap {
        /// Reference dimensions "I,J,K".
        #[arg(long)]
        dims: String,
        /// Degraded spatial dimensions "I_H,J_H".
        #[arg(long)]
        hsi_dims: String,
        /// MSI band count.
        #[arg(long)]
        km: usize,
        /// Range "lo,hi" for r1 = r2.
        #[arg(long)]
        r1: String,
        /// Range "lo,hi" for r3.
        #[arg(long)]
        r3: String,
        #[arg(long)]
        out: String,
    },
    /// Convert a raw binary or CSV band stack into a cube file.
    Ingest {
        #[arg(long)]
        input: String,
        /// f64, f32 (little-endian flat binary) or csv.
        #[arg(long)]
        format: String,
        /// Dimensions "I,J,K" of the cube.
        #[arg(long)]
        dims: String,
        #[arg(long)]
        out: String,
    },
    /// Region-mean spectral signatures from a cube and a label map.
    Signatures {
        #[arg(long)]
        sri: String,
        /// Label CSV: I rows of J comma-separated nonnegative integers.
        #[arg(long)]
        labels: String,
        #[arg(long)]
        out: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Synth {
            scenario,
            bands,
            seed,
            signatures,
            out,
        } => commands::synth(&scenario, bands, seed, signatures.as_deref(), &out),
        Cmd::Degrade {
            sri,
            d,
            q,
            sigma_blur,
            sensor,
            ranges,
            snr_hsi,
            snr_msi,
            seed,
            out_hsi,
            out_msi,
            out_deg,
        } => commands::degrade_cmd(commands::DegradeArgs {
            sri,
            d,
            q,
            sigma_blur,
            sensor,
            ranges,
            snr_hsi,
            snr_msi,
            seed,
            out_hsi,
            out_msi,
            out_deg,
        }),
        Cmd::Fuse {
            method,
            hsi,
            msi,
            deg,
            r#ref,
            ranks,
            cprank,
            r3,
            blocks,
            lambda,
            iters,
            out,
            metrics_out,
        } => commands::fuse_cmd(commands::FuseArgs {
            method,
            hsi,
            msi,
            deg,
            reference: r#ref,
            ranks,
            cprank,
            r3,
            blocks,
            lambda,
            iters,
            out,
            metrics_out,
        }),
        Cmd::Metrics {
            r#ref,
            est,
            d,
            label,
            out,
        } => commands::metrics_cmd(&r#ref, &est, d, &label, out.as_deref()),
        Cmd::Sweep { config, out } => commands::sweep_cmd(&config, &out),
        Cmd::SvdProfile { hsi, msi, top, out } => commands::svd_profile_cmd(&hsi, &msi, top, &out),
        Cmd::RegionMap {
            dims,
            hsi_dims,
            km,
            r1,
            r3,
            out,
        } => commands::region_map_cmd(&dims, &hsi_dims, km, &r1, &r3, &out),
        Cmd::Ingest {
            input,
            format,
            dims,
            out,
        } => commands::ingest_cmd(&input, &format, &dims, &out),
        Cmd::Signatures { sri, labels, out } => commands::signatures_cmd(&sri, &labels, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hsr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
