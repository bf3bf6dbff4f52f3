//! Experiment runner for the VGAE structure-poisoning defense.
//!
//! Commands `train`, `attack`, `defend`, `experiment` and `report` share one
//! JSON [`config::ExperimentConfig`] with flag overrides. Exit code 0 means
//! success, 1 a usage or configuration problem, 2 a failure while running.

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod report;
pub mod runner;

use std::ffi::OsString;
use std::fmt;
use std::process::ExitCode;

use clap::Parser;

/// Error classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config, missing or malformed input files.
    Config(anyhow::Error),
    /// Training, attack or defense failures.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) | Self::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

pub(crate) trait Classify<T> {
    fn config_err(self) -> Result<T, CliError>;
    fn runtime_err(self) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config_err(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Config(e.into()))
    }

    fn runtime_err(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime(e.into()))
    }
}

/// Parses `argv`, runs the command and maps the outcome to an exit code.
pub fn run_from_args<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
