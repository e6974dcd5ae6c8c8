//! `jdevar` command-line front end.

mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::{Cli, Command};
use commands::{Failure, Outcome};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let command = std::env::args().nth(1).unwrap_or_default();
            let message = e.render().to_string();
            return report(&command, &Failure::config("USAGE", message.trim()));
        }
    };
    let name = cli.command.name();
    let outcome = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Evar(a) => commands::evar(a),
        Command::Frontier(a) => commands::frontier(a),
        Command::KktCheck(a) => commands::kkt(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match outcome.and_then(write_artifacts) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(deferred)) => report(name, &deferred),
        Err(f) => report(name, &f),
    }
}

fn write_artifacts(outcome: Outcome) -> Result<Option<Failure>, Failure> {
    let io_failure = |e: std::io::Error| Failure { kind: "IO_ERROR".into(), message: e.to_string(), exit_code: 3 };
    for a in outcome.artifacts {
        match a.path {
            Some(path) => std::fs::write(&path, &a.bytes)
                .map_err(|e| io_failure(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?,
            None => std::io::stdout().lock().write_all(&a.bytes).map_err(io_failure)?,
        }
    }
    Ok(outcome.deferred)
}

fn report(command: &str, f: &Failure) -> ExitCode {
    let doc = json!({ "error": { "kind": f.kind, "message": f.message, "command": command } });
    eprintln!("{doc}");
    ExitCode::from(f.exit_code as u8)
}
