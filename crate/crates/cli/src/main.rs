mod args;
mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// A failed command, classified for the process exit code.
#[derive(Debug)]
pub enum Fail {
    /// Bad flags or configuration (exit 1).
    Usage(String),
    /// Unreadable, malformed or mismatched data (exit 2).
    Data(String),
    /// Every training run diverged (exit 3).
    Numeric(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Usage(_) => 1,
            Fail::Data(_) => 2,
            Fail::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fail::Usage(m) => write!(f, "usage error: {m}"),
            Fail::Data(m) => write!(f, "data error: {m}"),
            Fail::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
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
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Trace(a) => commands::trace(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("marnn: {e}");
            ExitCode::from(e.code())
        }
    }
}
