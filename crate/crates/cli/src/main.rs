//! `ljp` command-line entry point.

use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;

use args::{Cli, Command};

fn main() -> ExitCode {
    // usage errors exit 1; 2 is reserved for partial results
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();

    let outcome = match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Render(a) => commands::render(a),
        Command::Run(a) => commands::run(&cli, a),
        Command::Baselines(a) => commands::baselines(a),
        Command::Sweep(a) => commands::sweep(&cli, a),
        Command::Swap(a) => commands::swap(&cli, a),
        Command::Report(a) => commands::report(a),
        Command::Try(a) => commands::try_prompt(a),
    };
    match outcome {
        Ok(status) => status.into(),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
