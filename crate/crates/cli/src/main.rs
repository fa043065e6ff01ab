mod args;
mod commands;
mod manifest;
mod report;

use std::process::ExitCode;

use causalad::Error;
use clap::Parser;

use args::{Cli, Command};

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Bundle(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("CAUSALAD_LOG")
        .init();

    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(&cli.global, a),
        Command::Discover(a) => commands::discover(&cli.global, a),
        Command::Train(a) => commands::train(&cli.global, a),
        Command::Detect(a) => commands::detect(&cli.global, a),
        Command::Rca(a) => commands::rca(&cli.global, a),
        Command::Evaluate(a) => commands::evaluate(&cli.global, a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
