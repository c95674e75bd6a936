//! `bjq`: simulate, fit and apply Buckley-James Q-learning policies.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 model fitting
//! failure, 4 I/O failure. Set `BJQ_LOG` (e.g. `info`, `debug`) for logs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bjq_core::{Error, FitMethod};
use clap::{Parser, Subcommand};

use commands::{FitArgs, SchemaArgs};

#[derive(Debug, Parser)]
#[command(name = "bjq", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the replicated simulation experiment described by a TOML config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for replicates (default: logical cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit a policy to a long-format CSV and write the model and per-subject outputs.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        stages: usize,
        #[arg(long, default_value = "bj")]
        method: FitMethod,
        /// Q-function terms, e.g. "1 + Sex + TumorSize + trt + trt:TumorSize".
        #[arg(long)]
        terms: Option<String>,
        /// Cox imputation covariates for --method cox, e.g. "Sex + TumorSize + trt".
        #[arg(long)]
        cox_covariates: Option<String>,
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a saved policy to new data.
    Recommend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 4,
        Error::Csv { source, .. } if source.is_io_error() => 4,
        e if e.is_fit_failure() => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            workers,
        } => {
            if let Some(w) = workers {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build_global()
                    .map_err(|e| Error::InvalidArgument(format!("--workers: {e}")))?;
            }
            commands::simulate(&config, &out)
        }
        Command::Fit {
            data,
            stages,
            method,
            terms,
            cox_covariates,
            schema,
            out,
        } => commands::fit(FitArgs {
            data: &data,
            stages,
            method,
            terms: terms.as_deref(),
            cox_covariates: cox_covariates.as_deref(),
            schema: &schema,
            out: &out,
        }),
        Command::Recommend {
            model,
            data,
            schema,
            out,
        } => commands::recommend(&model, &data, &schema, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BJQ_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
