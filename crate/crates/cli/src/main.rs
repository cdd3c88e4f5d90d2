use std::process::ExitCode;

use latmap_core::Error;

mod args;
mod commands;

use args::Command;

/// Exit status 1 for computations with no usable answer, 2 for bad input or
/// usage.
#[derive(Debug)]
pub enum Failure {
    Degenerate(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::DegenerateEstimate { .. } | Error::EmptyScale { .. } | Error::InsufficientNeighborhood { .. } => {
                Failure::Degenerate(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let invocation = match args::parse(std::env::args_os().collect()) {
        Ok(inv) => inv,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let cli = invocation.cli;
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let workers = cli.workers;
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::EstimateDim(a) => commands::estimate_dim(a, workers),
        Command::BuildAtlas(a) => commands::build(a, workers),
        Command::Layout(a) => commands::layout(a, workers),
        Command::EvalRecon(a) => commands::eval_recon(a, workers),
        Command::EvalPdist(a) => commands::eval_pdist(a, workers),
        Command::Serve(a) => commands::serve(a, invocation.datasets),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Degenerate(msg)) => {
            eprintln!("latmap: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("latmap: {msg}");
            ExitCode::from(2)
        }
    }
}
