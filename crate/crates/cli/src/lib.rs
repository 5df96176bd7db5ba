//! Command-line front end for `spherefield`.
//!
//! Exit codes: 0 success or equivalent, 1 usage, 2 invalid model or
//! unsupported operation, 3 orthogonal verdict or failed check,
//! 4 inconclusive, 5 closed-form and numeric verdicts disagree.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable naming the default output directory of `sample`.
pub const OUT_DIR_ENV: &str = "SPHEREFIELD_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NEGATIVE: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;
pub const EXIT_DISAGREEMENT: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid: {0}")]
    Invalid(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Invalid(_) => EXIT_INVALID,
        }
    }
}

impl From<spherefield::Error> for CliError {
    fn from(e: spherefield::Error) -> Self {
        use spherefield::Error as E;
        match e {
            E::InvalidModel(_) | E::Unsupported(_) | E::NotStrictlyPositive { .. } | E::Overflow(_) => {
                CliError::Invalid(e.to_string())
            }
            E::InvalidArgument(_) | E::Incompatible(_) | E::Serialization(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("i/o error: {e}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "spherefield", version, about = "Isotropic Hilbert-valued Gaussian random fields on spheres")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Truncation {
    /// Highest materialized degree L_max.
    #[arg(long = "l-max")]
    pub l_max: Option<usize>,
    /// Fourier truncation K_max (Legendre–Matérn).
    #[arg(long = "k-max")]
    pub k_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long = "policy-margin")]
    pub margin: Option<f64>,
    #[arg(long = "policy-eps")]
    pub eps: Option<f64>,
    #[arg(long = "policy-floor")]
    pub floor: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model's validity conditions and coefficient diagnostics.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        trunc: Truncation,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate R(cos θ).
    Kernel {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated angles in radians, within [0, π].
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        thetas: Option<Vec<f64>>,
        #[command(flatten)]
        trunc: Truncation,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize fields on a grid and write a reproducibility manifest.
    Sample {
        #[arg(long, required_unless_present = "manifest")]
        config: Option<PathBuf>,
        /// Re-run from a manifest and compare output hashes.
        #[arg(long, conflicts_with = "config")]
        manifest: Option<PathBuf>,
        /// Grid: equispaced:N, equiangular:NTxNP, random:N[:SEED], or file:PATH.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long = "n-samples")]
        n_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// First stream; sample i uses stream + i.
        #[arg(long)]
        stream: Option<u64>,
        #[command(flatten)]
        trunc: Truncation,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Output directory (default: $SPHEREFIELD_OUT_DIR, else ./spherefield-out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Equivalence or orthogonality of the Gaussian measures of two models.
    Equiv {
        /// Two configs.
        #[arg(long, num_args = 1, required = true)]
        config: Vec<PathBuf>,
        #[command(flatten)]
        trunc: Truncation,
        #[command(flatten)]
        policy: PolicyArgs,
        /// json: full report; csv: (l, t_l, S_l).
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the (l, t_l, S_l) table here.
        #[arg(long = "terms-csv")]
        terms_csv: Option<PathBuf>,
    },
    /// Monte Carlo check of empirical against analytic covariance.
    McCheck {
        #[arg(long)]
        config: PathBuf,
        /// Compare against this model's kernel instead of the sampled one.
        #[arg(long = "analytic-config")]
        analytic_config: Option<PathBuf>,
        #[arg(long = "n-samples")]
        n_samples: Option<usize>,
        /// Number of point pairs at angles jπ/(n−1).
        #[arg(long, default_value_t = 10)]
        pairs: usize,
        /// Explicit pair angles (overrides --pairs).
        #[arg(long, value_delimiter = ',')]
        thetas: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        stream: Option<u64>,
        #[arg(long = "policy-z")]
        z: Option<f64>,
        #[command(flatten)]
        trunc: Truncation,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the materialized Schoenberg sequence.
    SchoenbergExport {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        trunc: Truncation,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("spherefield: {e}");
            e.exit_code()
        }
    }
}
