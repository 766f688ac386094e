//! Command-line workflows: learn a representation, verify it, generate
//! MNIST-Live data, train and evaluate SpacetimeNet.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 no convergence,
//! 3 verification failed.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use lierep::Execution;

mod data;
mod learn;
pub mod manifest;
mod verify;

pub use data::{EvalArgs, GenDataArgs, TrainArgs};
pub use learn::{LearnArgs, LearnTrace};
pub use manifest::RunManifest;
pub use verify::VerifyArgs;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "LIEREP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lierep", version, about = "Learn, verify and use Lie algebra representations")]
pub struct Cli {
    /// Run every loop sequentially.
    #[arg(long, global = true)]
    pub serial: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a representation from structure constants.
    Learn(LearnArgs),
    /// Check a representation's irreducibility through its tensor products.
    Verify(VerifyArgs),
    /// Build MNIST-Live train and dev clouds from IDX files.
    GenData(GenDataArgs),
    /// Train SpacetimeNet on generated clouds.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a cloud file.
    Eval(EvalArgs),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] lierep::Error),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    VerificationFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Core(_) => 1,
            CliError::NotConverged(_) => 2,
            CliError::VerificationFailed(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Shared runtime settings for one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub execution: Execution,
    pub threads: usize,
    /// The raw command line, echoed into manifests.
    pub argv: Vec<String>,
}

impl Context {
    pub fn new(serial: bool, argv: Vec<String>) -> Self {
        let execution = if serial { Execution::Serial } else { Execution::Parallel };
        Self {
            execution,
            threads: execution.width(),
            argv,
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    #[cfg(feature = "parallel")]
    {
        // A second call in the same process keeps the existing pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    run_with_argv(cli, std::env::args().collect())
}

pub fn run_with_argv(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    configure_threads()?;
    let ctx = Context::new(cli.serial, argv);
    match cli.command {
        Command::Learn(a) => learn::run(&a, &ctx),
        Command::Verify(a) => verify::run(&a, &ctx),
        Command::GenData(a) => data::gen_data(&a, &ctx),
        Command::Train(a) => data::train(&a, &ctx),
        Command::Eval(a) => data::eval(&a, &ctx),
    }
}

/// Parses `args` (program name first) and runs them, returning the exit
/// code the binary would.
pub fn main_with_args<I, S>(args: I) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let argv = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run_with_argv(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(lierep::Error::from)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

/// `dir/stem.suffix.json` next to `path`.
pub(crate) fn sibling(path: &std::path::Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.json"))
}
