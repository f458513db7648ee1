//! Command-line front end: `simulate`, `segment`, `evaluate` and `overlay`.
//!
//! Exit codes: `0` success, `2` usage or input error, `3` evaluation
//! mismatch, `4` numerical failure.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{run_manifest, RunManifest};
pub use config::SegmentConfig;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "msnlac", version, about = "Multi-scale non-local active contours for speckled images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the three-shape phantom, speckle it and write clean, speckled and ground-truth images.
    Simulate(SimulateArgs),
    /// Segment an image and write the mask, an overlay, per-level traces and run.json.
    Segment(Box<SegmentArgs>),
    /// Print the region fitting error of a mask against ground truth.
    Evaluate(EvaluateArgs),
    /// Draw a mask boundary over an image.
    Overlay(OverlayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ImageFormat {
    /// 16-bit binary PGM.
    Pgm16,
    /// Little-endian f32 raster with a JSON size sidecar.
    Raw,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Side length of a square canvas.
    #[arg(long, default_value_t = 512, conflicts_with_all = ["width", "height"])]
    pub size: usize,
    #[arg(long, requires = "height")]
    pub width: Option<usize>,
    #[arg(long, requires = "width")]
    pub height: Option<usize>,
    /// Gamma speckle shape (number of looks).
    #[arg(long, default_value_t = 4.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Background intensity.
    #[arg(long, default_value_t = 1000.0)]
    pub bg: f64,
    /// Foreground intensity of the flat shapes.
    #[arg(long, default_value_t = 3000.0)]
    pub fg: f64,
    /// Intensity range swept by the ramp inside the horseshoe.
    #[arg(long, default_value_t = 3000.0)]
    pub span: f64,
    #[arg(long, value_enum, default_value_t = ImageFormat::Pgm16)]
    pub format: ImageFormat,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Default, Args)]
pub struct SegmentArgs {
    /// Input image (PGM, or raw f32 with a `.json` sidecar).
    pub input: Option<PathBuf>,
    /// Ground-truth mask; enables the RFE column and the final RFE report.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Re-run exactly the configuration recorded in a previous run.json.
    #[arg(long, conflicts_with = "config")]
    pub replay: Option<PathBuf>,
    /// Pyramid levels L (1 is single scale).
    #[arg(long)]
    pub scales: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// lognormal, rayleigh, gamma, weibull or ga0.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Number of looks of the ga0 model.
    #[arg(long)]
    pub looks: Option<u32>,
    /// kl, hellinger, tv, js or em.
    #[arg(long)]
    pub distance: Option<String>,
    /// standard or verbatim.
    #[arg(long)]
    pub js_mode: Option<String>,
    /// Patch half-size τ.
    #[arg(long)]
    pub patch_half: Option<usize>,
    /// Non-local window radius.
    #[arg(long)]
    pub nl_radius: Option<usize>,
    /// Window kernel spread, or `auto`.
    #[arg(long)]
    pub nl_sigma: Option<String>,
    /// Window kernel scaling: density (unit mass) or peak (centre weight 1).
    #[arg(long)]
    pub kernel_norm: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Time step, or `auto`.
    #[arg(long)]
    pub xi: Option<String>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Pyramid pre-smoothing scale.
    #[arg(long)]
    pub sigma0: Option<f64>,
    /// positive or border-background.
    #[arg(long)]
    pub polarity: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Dump φ as raw f32 every k iterations.
    #[arg(long)]
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub mask: PathBuf,
    pub gt: PathBuf,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    pub image: PathBuf,
    pub mask: PathBuf,
    /// Output file; `.png` writes PNG, anything else binary PPM.
    #[arg(long, default_value = "overlay.png")]
    pub out: PathBuf,
    /// Boundary colour as `r,g,b`.
    #[arg(long, default_value = "255,0,0", value_parser = parse_color)]
    pub color: [u8; 3],
}

fn parse_color(s: &str) -> std::result::Result<[u8; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected r,g,b, got `{s}`"));
    }
    let mut out = [0u8; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("bad colour component `{p}`"))?;
    }
    Ok(out)
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFiniteEnergy { .. } | Error::RootNotBracketed { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    commands::dispatch(cli.command)
}
