//! Command-line front end: configuration, CSV tables and subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

use crate::commands::{execute, Cli};
use crate::error::CliError;
use crate::table::emit_csv;

/// Runs the program on `args` (including the binary name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let (report, path) = match cli.threads {
        Some(0) => return Err(CliError::Validation("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?
            .install(|| execute(cli))?,
        None => execute(cli)?,
    };
    for note in &report.notes {
        let _ = writeln!(err, "{note}");
    }
    let stdout_err = |e: std::io::Error| CliError::Runtime(format!("standard output: {e}"));
    out.write_all(report.text.as_bytes()).map_err(stdout_err)?;
    if let Some(table) = &report.table {
        match path.as_deref() {
            Some(p) => emit_csv(table, Some(p))?,
            None => table.write_to(&mut *out)?,
        }
    }
    out.flush().map_err(stdout_err)
}
