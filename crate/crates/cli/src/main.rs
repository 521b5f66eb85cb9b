mod config;
mod ingest;
mod output;
mod pipeline;

use std::process::ExitCode;

use clap::Parser;

/// Machine-readable tag for a failure: the library's error kind when there
/// is one, otherwise a generic tag.
fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ricox::Error>() {
            return e.kind();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
        if cause.downcast_ref::<csv::Error>().is_some() {
            return "parse";
        }
    }
    "invalid_input"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RICOX_LOG", "warn")).init();
    let result = config::Cli::parse()
        .resolve()
        .and_then(|cfg| pipeline::run(&cfg));
    match result {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e:#}", error_kind(&e));
            ExitCode::FAILURE
        }
    }
}
