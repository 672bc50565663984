mod args;
mod commands;
mod io;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Qualify(a) => commands::qualify(a),
        Command::Endurance(a) => commands::endurance(a),
        Command::Agreement(a) => commands::agreement(a),
        Command::Mace(a) => commands::mace(a),
        Command::Timing(a) => commands::timing(a),
        Command::Stats(c) => commands::stats(c),
        Command::Simulate(a) => commands::simulate(a),
        Command::Judge(a) => commands::judge(a),
        Command::Cost(a) => commands::cost(a),
        Command::Report(a) => commands::report(a),
    }
}

/// 2 for filesystem and network failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<crowdvet::Error>() {
            if e.is_io() {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<csv::Error>() {
            if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<serde_json::Error>() {
            if e.is_io() {
                return 2;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
