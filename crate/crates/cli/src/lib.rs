//! Command-line driver for the maskbench pipeline.
//!
//! `run_cli` is the whole user surface: it parses arguments, loads the
//! pipeline configuration, prepares the workdir and dispatches to one
//! subcommand. Exit codes: 0 success, 1 usage or configuration error,
//! 2 data error.

mod commands;
pub mod config;
pub mod workdir;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::PipelineConfig;
pub use workdir::{Layout, LAYOUT_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

macro_rules! data_error_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error_from!(
    maskbench_core::dataset::DatasetError,
    maskbench_core::features::FeatureError,
    maskbench_core::masks::MaskError,
    maskbench_core::metrics::MetricsError,
    maskbench_core::nn::NnError,
    maskbench_core::signal::SignalError,
    maskbench_core::signal::wav::WavError
);

/// Data error naming the file that caused it.
pub(crate) fn io_error(path: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "maskbench", version, about = "Mask-based monaural speech separation pipeline")]
pub struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Force deterministic numerics (single worker thread).
    #[arg(long, global = true)]
    pub reference_mode: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Build the mixture manifest and render WAVs and training targets.
    Mix,
    /// Compute the feature cache and normalisation statistics.
    Features,
    /// Train one model per configured target kind.
    Train,
    /// Separate every test mixture with every trained model.
    Separate,
    /// Score separated outputs against the clean speech.
    Eval,
    /// Score ideal (oracle) masks of every kind.
    Oracle,
    /// Speech–noise spectral coherence per frequency bin.
    Coherence,
    /// Spectrogram and mask images (PGM) plus CSV data.
    ExportFigs {
        /// Number of test mixtures to export.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let Some(path) = &cli.config else {
        return Err(CliError::Usage("the --config PATH option is required".into()));
    };
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let layout = Layout::new(cfg.workdir()?);
    layout.prepare(&cfg, cli.reference_mode)?;
    let jobs = if cli.reference_mode { 1 } else { cli.jobs.unwrap_or(0) };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    let ctx = commands::Context::new(cfg, layout);
    pool.install(|| commands::dispatch(&ctx, cli.command))?;
    ctx.layout.write_digest()
}
