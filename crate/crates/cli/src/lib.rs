//! The `dagrid` command line: polar and circular accumulator demos, the
//! adjoint and gradient-check suites, and a determinism benchmark.
//!
//! Every command prints exactly one line of JSON on stdout. Diagnostics go to
//! stderr. Exit codes are 0 on success, 2 on a usage error and 1 on a
//! runtime error or a failed check.

pub mod bench;
mod commands;
pub mod random;
pub mod suites;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{ArgAction, ArgGroup, Args, Parser, Subcommand, ValueEnum};
use dagrid::{GridFilter, KernelKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] dagrid::Error),
    #[error("{0}")]
    ChecksFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) | CliError::ChecksFailed(_) => 1,
        }
    }

    /// Library errors raised while validating flags are usage errors.
    fn usage(e: dagrid::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dagrid",
    version,
    about = "Directed accumulator grid demos and checks"
)]
pub struct Cli {
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = "DAGRID_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Polar accumulate, optionally filter, slice back; report the error.
    PolarRoundtrip(PolarPipelineArgs),
    /// Like polar-roundtrip but smooths the polar grid (default box:1).
    PolarFilter(PolarPipelineArgs),
    /// Classical bilinear/nearest resampling into polar space.
    PolarSample(PolarSampleArgs),
    /// Circular accumulation and peak readout on an image or phantom.
    CircleDetect(CircleDetectArgs),
    /// Finite-difference checks of the analytic backward passes.
    Gradcheck(GradcheckArgs),
    /// Random checks of the accumulate/slice adjoint identity.
    AdjointSuite(AdjointArgs),
    /// Wall time and checksums of accumulate/slice across worker counts.
    Bench(BenchArgs),
    /// Writes a synthetic phantom.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PolarArgs {
    /// Radial bins.
    #[arg(long, default_value_t = 64)]
    pub hr: usize,
    /// Angular bins.
    #[arg(long, default_value_t = 64)]
    pub wpsi: usize,
    /// Pixels per radial bin. Defaults to covering the inscribed circle.
    #[arg(long)]
    pub sr: Option<f64>,
    /// Radians per angular bin. Defaults to 2π / wpsi.
    #[arg(long)]
    pub stheta: Option<f64>,
    /// Center row. Defaults to (H − 1) / 2.
    #[arg(long)]
    pub xc: Option<f64>,
    /// Center column. Defaults to (W − 1) / 2.
    #[arg(long)]
    pub yc: Option<f64>,
    /// Wrap the angular axis.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub wrap: bool,
    #[arg(long, default_value = "bilinear")]
    pub kernel: KernelKind,
}

#[derive(Debug, Args)]
pub struct PolarPipelineArgs {
    /// Input image (.pgm or .dgt).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub polar: PolarArgs,
    /// none, box:<radius> or gaussian:<sigma>.
    #[arg(long)]
    pub filter: Option<GridFilter>,
    /// Output image (.pgm or .dgt).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the metrics JSON here.
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PolarSampleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub polar: PolarArgs,
    /// Polar image (.dgt, or .pgm rescaled to its value range).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "ring", "disk"])))]
pub struct CircleDetectArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Ring phantom of this radius.
    #[arg(long)]
    pub ring: Option<f64>,
    /// Disk phantom of this radius.
    #[arg(long)]
    pub disk: Option<f64>,
    /// Ring thickness.
    #[arg(long, default_value_t = 2.0)]
    pub thickness: f64,
    /// Phantom side length.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Strictly decreasing band edges, e.g. 15,10,5.
    #[arg(long, value_delimiter = ',', default_values_t = dagrid::circular::DEFAULT_RADII)]
    pub radii: Vec<usize>,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub symmetric: bool,
    /// Swap the forward and backward grid sets.
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    pub reversed: bool,
    #[arg(long, default_value_t = dagrid::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value = "bilinear")]
    pub kernel: KernelKind,
    /// Read the peak of one band instead of the band sum.
    #[arg(long)]
    pub band: Option<usize>,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// An operator name, or `all`.
    #[arg(long, default_value = "all")]
    pub op: String,
    #[arg(long, default_value = "bilinear")]
    pub kernel: KernelKind,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdjointArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Largest source or target side.
    #[arg(long, default_value_t = 64)]
    pub max_side: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_SIZES)]
    pub sizes: Vec<usize>,
    /// Worker counts to compare; the first is the reference.
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_WORKERS)]
    pub workers: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PhantomKind {
    Disk,
    Ring,
    Checker,
    Blob,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub phantom: PhantomKind,
    #[arg(long, default_value_t = 8.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 2.0)]
    pub thickness: f64,
    #[arg(long, default_value_t = 8)]
    pub cell: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [6.0, 10.0, 16.0])]
    pub sigmas: Vec<f64>,
    /// Side length when height and width are not given.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Center row. Defaults to floor(H / 2).
    #[arg(long)]
    pub xc: Option<f64>,
    /// Center column. Defaults to floor(W / 2).
    #[arg(long)]
    pub yc: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output image (.pgm or .dgt).
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs the command line against the process streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    2
                }
            };
        }
    };
    match execute(cli) {
        Ok(line) => {
            let _ = writeln!(out, "{line}");
            0
        }
        Err(Failure { error, line }) => {
            if let Some(line) = line {
                let _ = writeln!(out, "{line}");
            }
            let _ = writeln!(err, "error: {error}");
            error.exit_code()
        }
    }
}

/// An error, plus the JSON line of a command that ran but failed its checks.
struct Failure {
    error: CliError,
    line: Option<String>,
}

impl<E: Into<CliError>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            error: e.into(),
            line: None,
        }
    }
}

fn execute(cli: Cli) -> Result<String, Failure> {
    let pool = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be >= 1".into()).into()),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| commands::dispatch(cli.command))
}
