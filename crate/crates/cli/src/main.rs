use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::ConfigArgs;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cdcv::Error),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if !e.is_input_error() => 1,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) if !e.is_input_error() => "numerical",
            CliError::Io { .. } => "io",
            _ => "input",
        }
    }

    fn path(&self) -> Option<String> {
        match self {
            CliError::Io { path, .. } | CliError::Core(cdcv::Error::Io { path, .. }) => Some(path.display().to_string()),
            _ => None,
        }
    }
}

/// Cluster-derived canonical vine copula models: fitting, simulation and
/// VaR backtesting of asset return panels.
#[derive(Debug, Parser)]
#[command(name = "cdcv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic two-level factor return panel and its sector labels.
    Generate {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        n_assets: Option<usize>,
        #[arg(long)]
        n_sectors: Option<usize>,
        #[arg(long)]
        n_obs: Option<usize>,
    },
    /// Fit one window and write the model and its conditioning diagnostics.
    Fit {
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Draw returns from a saved model into a CSV file.
    Simulate {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long, value_name = "JSON")]
        model: PathBuf,
        /// Number of simulated days
        #[arg(long, short)]
        n: usize,
    },
    /// Rolling VaR backtest with the Kupiec proportion-of-failures test.
    Backtest {
        #[command(flatten)]
        args: ConfigArgs,
        /// out-of-sample or within-sample
        #[arg(long, default_value = "out-of-sample")]
        mode: String,
    },
    /// Residual correlation summaries over a range of cluster counts or noise levels.
    Sweep {
        #[command(flatten)]
        args: ConfigArgs,
        /// b (cluster count) or upsilon (noise parameter)
        #[arg(long)]
        axis: String,
        /// Comma-separated settings; defaults to 3..18 for b and 6..15 for upsilon
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Number of evenly spaced windows averaged per setting
        #[arg(long, default_value_t = 1)]
        windows: usize,
    },
    /// Conditioning diagnostics, parameter count and family selection of a saved model.
    Diagnostics {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long, value_name = "JSON")]
        model: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { args, n_assets, n_sectors, n_obs } => {
            let mut c = args.resolve()?;
            if let Some(v) = n_assets {
                c.generator.n_assets = v;
            }
            if let Some(v) = n_sectors {
                c.generator.n_sectors = v;
            }
            if let Some(v) = n_obs {
                c.generator.n_obs = v;
            }
            commands::generate(&c)
        }
        Command::Fit { args } => commands::fit(&args.resolve()?),
        Command::Simulate { args, model, n } => commands::simulate(&args.resolve()?, &model, n),
        Command::Backtest { args, mode } => commands::backtest(&args.resolve()?, &mode),
        Command::Sweep { args, axis, values, windows } => commands::sweep(&args.resolve()?, &axis, values, windows),
        Command::Diagnostics { args, model } => commands::diagnostics(&args.resolve()?, &model),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "error": { "kind": e.kind(), "message": e.to_string(), "path": e.path() },
            });
            eprintln!("{body}");
            ExitCode::from(e.exit_code())
        }
    }
}
