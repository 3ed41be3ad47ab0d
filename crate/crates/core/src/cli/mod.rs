//! Command-line front end. Every analysis is a subcommand that writes CSV
//! or JSON to a file or standard output.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure.

mod commands;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::lattice::LatticeModel;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Numeric(_) => 2,
        }
    }
}

pub(crate) fn config(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

pub(crate) fn numeric(msg: impl std::fmt::Display) -> CliError {
    CliError::Numeric(msg.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "ptbic",
    version,
    about = "Spectra, bound modes, scattering and propagation on non-Hermitian lattices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues and state classes for one gain value or a gain grid.
    Spectrum(SpectrumArgs),
    /// Gain at which complex eigenvalues appear or the outside bound state vanishes.
    Threshold(ThresholdArgs),
    /// Transmittance over a wavenumber grid.
    Transmit(TransmitArgs),
    /// Evolve an initial state and classify the power growth.
    Propagate(PropagateArgs),
    /// Closed-form zero-energy mode of model b and related checks.
    Bic(BicArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file, `-` for standard output.
    #[arg(long, default_value = "-")]
    pub output: String,
    /// Worker threads for scans.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

/// Lattice selection shared by all subcommands.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// `a`, `b` or `custom:<path to lattice JSON>`.
    #[arg(long)]
    pub model: Option<String>,
    /// On-site detuning of model a.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Half width N of the window -N..=N [default: 200; propagate uses
    /// 2·z_max + 20].
    #[arg(long)]
    pub sites: Option<usize>,
}

pub const DEFAULT_SITES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    A { delta: f64 },
    B,
    Custom(PathBuf),
}

impl ModelArgs {
    pub fn half_width(&self) -> usize {
        self.sites.unwrap_or(DEFAULT_SITES)
    }

    pub fn kind(&self) -> Result<ModelKind, CliError> {
        let model = self
            .model
            .as_deref()
            .ok_or_else(|| config("--model is required (a, b or custom:<path>)"))?;
        match model {
            "a" => {
                let delta = self
                    .delta
                    .ok_or_else(|| config("model a requires --delta"))?;
                finite("delta", delta)?;
                Ok(ModelKind::A { delta })
            }
            "b" => Ok(ModelKind::B),
            other => match other.strip_prefix("custom:") {
                Some(path) if !path.is_empty() => Ok(ModelKind::Custom(PathBuf::from(path))),
                _ => Err(config(format!(
                    "unknown model '{other}', expected a, b or custom:<path>"
                ))),
            },
        }
    }

    /// Model at gain `g` (ignored for custom lattices).
    pub fn build(&self, g: Option<f64>) -> Result<LatticeModel, CliError> {
        let need_g = || g.ok_or_else(|| config("--g is required for built-in models"));
        match self.kind()? {
            ModelKind::A { delta } => {
                LatticeModel::model_a(delta, need_g()?, self.half_width()).map_err(config)
            }
            ModelKind::B => LatticeModel::model_b(need_g()?, self.half_width()).map_err(config),
            ModelKind::Custom(path) => LatticeModel::load(&path).map_err(config),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Single gain value.
    #[arg(long, conflicts_with = "g_range")]
    pub g: Option<f64>,
    /// Gain grid `lo:hi:step`, inclusive of lo, nothing beyond hi.
    #[arg(long)]
    pub g_range: Option<String>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdKind {
    /// Onset of complex eigenvalues.
    Pt,
    /// Disappearance of the bound state outside the band (model a).
    Boc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Auto,
    Truncated,
    Radiating,
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = ThresholdKind::Pt)]
    pub kind: ThresholdKind,
    /// Lower end of the gain bracket.
    #[arg(long)]
    pub g_lo: Option<f64>,
    /// Upper end of the gain bracket.
    #[arg(long)]
    pub g_hi: Option<f64>,
    /// Bisection tolerance on g.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Spectrum used by the predicate: truncated window, lead-attached core,
    /// or the latter whenever the lattice is uniform outside a core.
    #[arg(long, value_enum, default_value_t = CriterionArg::Auto)]
    pub criterion: CriterionArg,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TransmitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub g: Option<f64>,
    /// Wavenumber grid in units of π, `lo:hi:step`, strictly inside (0, 1).
    #[arg(long, conflicts_with = "q_points")]
    pub q_range: Option<String>,
    /// Number of evenly spaced interior wavenumbers.
    #[arg(long, default_value_t = 500)]
    pub q_points: usize,
    /// Core half width; defaults to the extent of the non-uniform region.
    #[arg(long)]
    pub core: Option<usize>,
    /// Add closed-form columns (model a only).
    #[arg(long)]
    pub analytic: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Expm,
    Rk,
}

#[derive(Debug, Clone, Args)]
pub struct PropagateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, conflicts_with = "g_rel")]
    pub g: Option<f64>,
    /// Gain as a multiple of the model's symmetry-breaking threshold.
    #[arg(long)]
    pub g_rel: Option<f64>,
    /// Excite this single site with unit amplitude.
    #[arg(long, conflicts_with_all = ["c0_file", "jordan_seed"])]
    pub excite: Option<i64>,
    /// Initial state as CSV with columns n, re_c, im_c.
    #[arg(long, conflicts_with = "jordan_seed")]
    pub c0_file: Option<PathBuf>,
    /// Start from the zero mode plus EPS times its associated function.
    #[arg(long, value_name = "EPS")]
    pub jordan_seed: Option<f64>,
    /// Compare against the closed-form secular solution with this EPS.
    #[arg(long, value_name = "EPS")]
    pub check_jordan: Option<f64>,
    #[arg(long, default_value_t = 150.0)]
    pub z_max: f64,
    /// Output sampling interval.
    #[arg(long, default_value_t = 0.5)]
    pub dz: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Expm)]
    pub method: MethodArg,
    /// Growth fits use z in [window_frac·z_max, z_max].
    #[arg(long, default_value_t = 0.5)]
    pub window_frac: f64,
    /// Also write the full trace `z, n, re_c, im_c, abs2` here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Also write the growth classification JSON here.
    #[arg(long)]
    pub growth: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BicArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    pub g: f64,
    /// Scale the mode to unit norm.
    #[arg(long)]
    pub normalize: bool,
    /// Report the associated-function identity instead of the mode.
    #[arg(long)]
    pub check_exceptional: bool,
    /// Dump the mode plus EPS times the associated function (g = 1).
    #[arg(long, value_name = "EPS")]
    pub jordan_seed: Option<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

pub(crate) fn finite(name: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(config(format!("--{name} must be finite")))
    }
}

pub(crate) fn positive(name: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(config(format!("--{name} must be positive and finite")))
    }
}

/// Parse `lo:hi:step` into `lo, lo+step, ...` up to `hi`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || config(format!("grid '{text}' is not of the form lo:hi:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 {
        return Err(bad());
    }
    if hi < lo {
        return Err(config(format!("grid '{text}' is empty")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}

pub(crate) fn open_output(path: &str) -> Result<Box<dyn Write>, CliError> {
    if path == "-" {
        Ok(Box::new(BufWriter::new(io::stdout().lock())))
    } else {
        File::create(path)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| config(format!("cannot create {path}: {e}")))
    }
}

pub(crate) fn write_json<T: serde::Serialize>(
    value: &T,
    mut out: impl Write,
) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| config(format!("write failed: {e}")))?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|e| config(format!("write failed: {e}")))
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Threshold(a) => commands::threshold(a),
        Command::Transmit(a) => commands::transmit(a),
        Command::Propagate(a) => commands::propagate(a),
        Command::Bic(a) => commands::bic(a),
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
