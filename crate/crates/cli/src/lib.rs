//! Command-line pipeline: synth -> augment -> extract -> train -> predict
//! -> eval, plus gradient audits and the seeded benchmark.

pub mod commands;
pub mod config;
pub mod container;
pub mod pipeline;

use std::ffi::OsString;

use clap::Parser;

pub use commands::Cli;

/// Failure classes with stable process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] ordrank::Error),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        use ordrank::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(E::ConfigInvalid(_)) => 2,
            CliError::Core(E::NonFinite(_) | E::DegenerateBatch(_)) => 4,
            CliError::Core(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.code() {
            1 => "usage",
            2 => "config",
            3 => "data",
            _ => "numeric",
        }
    }

    /// `error code=<n> kind=<class> message="<text>"` on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error code={} kind={} message=\"{}\"", self.code(), self.kind(), msg)
    }
}

/// Parse arguments, run one command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::Usage(first).line());
            return 1;
        }
    };
    match commands::execute(&cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.line());
            e.code()
        }
    }
}
