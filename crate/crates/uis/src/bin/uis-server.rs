use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;

use uis::activation;
use uis::activity::{ActivityLog, Level, Sink};
use uis::core::fixture;
use uis::web::{server, App};

/// Serve the university information system over HTTP.
#[derive(Debug, Parser)]
#[command(name = "uis-server", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// 0 selects a free port; the chosen one is printed on stdout.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Shipped fixture id or path to a fixture TOML file.
    #[arg(long, default_value = "baseline-small")]
    fixture: String,
    /// Activity log destination; stderr when omitted.
    #[arg(long)]
    log_file: Option<PathBuf>,
    #[arg(long, default_value = "info")]
    log_level: Level,
    /// Activation log destination; stderr when omitted.
    #[arg(long)]
    activation_log: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
}

fn run(args: Args) -> Result<(), String> {
    let dataset = fixture::load(&args.fixture).map_err(|e| e.to_string())?;
    let sink = match &args.log_file {
        Some(path) => Sink::file(path).map_err(|e| e.to_string())?,
        None => Sink::Stderr,
    };
    let activation_sink = match &args.activation_log {
        Some(path) => Sink::file(path).map_err(|e| e.to_string())?,
        None => Sink::Stderr,
    };
    activation::install(activation_sink);
    let app =
        App::new(&dataset, ActivityLog::new(sink, args.log_level)).map_err(|e| e.to_string())?;
    let handle = server::start(
        Arc::new(app),
        &format!("{}:{}", args.host, args.port),
        args.workers,
    )
    .map_err(|e| e.to_string())?;
    println!("listening on {}", handle.addr());
    std::io::stdout().flush().map_err(|e| e.to_string())?;
    handle.join();
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uis-server: {e}");
            ExitCode::FAILURE
        }
    }
}
