//! `homodyne`: simulate, oracle, figure and validate subcommands.
//!
//! Exit codes: 0 success, 1 failed validation, 2 invalid flags or
//! parameters, 3 I/O failure, 4 photon-number cutoff too small.

mod args;
mod figure;
mod oracle;
mod output;
mod simulate;
mod svg;

use std::process::ExitCode;

use clap::Parser;
use homodyne_core::validation::{run_all, ValidationOptions};

use args::{Cli, Command};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
    Cutoff(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Cutoff(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Cutoff(m) => m,
        }
    }
}

impl From<homodyne_core::Error> for Failure {
    fn from(e: homodyne_core::Error) -> Self {
        match e {
            homodyne_core::Error::CutoffTooSmall { .. } => Failure::Cutoff(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let argv = match args::expand_config(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(f) => return fail(f),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Oracle(a) => oracle::run(&a),
        Command::Figure(a) => figure::run(&a),
        Command::Validate(a) => {
            let report = run_all(&ValidationOptions {
                compensation_gain: a.debug_compensation_gain,
            });
            print!("{}", report.render());
            return ExitCode::from(if report.all_passed() { 0 } else { 1 });
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("error: {}", f.message());
    ExitCode::from(f.code())
}
