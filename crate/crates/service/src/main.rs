use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;
use procline_core::persist::load_base;
use procline_service::{router, AppState, DEFAULT_LISTEN, LISTEN_VAR};

/// Serves a process base over HTTP. The listen address comes from
/// `PROCLINE_LISTEN` (default 127.0.0.1:8080).
#[derive(Parser)]
#[command(name = "procline-service", version)]
struct Args {
    /// Process base JSON file.
    base: PathBuf,
    /// Directory for session snapshots; existing snapshots are restored.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    /// Seconds between snapshots.
    #[arg(long, default_value_t = 30)]
    snapshot_interval: u64,
}

#[tokio::main]
async fn main() -> std::process::ExitCode {
    let args = Args::parse();
    let state = match load_base(&args.base).and_then(|base| AppState::new(base, args.snapshots)) {
        Ok(state) => state,
        Err(err) => {
            eprintln!("procline-service: {err}");
            return std::process::ExitCode::from(1);
        }
    };
    let addr = std::env::var(LISTEN_VAR).unwrap_or_else(|_| DEFAULT_LISTEN.to_owned());
    let listener = match tokio::net::TcpListener::bind(&addr).await {
        Ok(listener) => listener,
        Err(err) => {
            eprintln!("procline-service: cannot listen on {addr}: {err}");
            return std::process::ExitCode::from(1);
        }
    };
    eprintln!("procline-service listening on {addr}");

    let ticker = state.clone();
    let interval = Duration::from_secs(args.snapshot_interval.max(1));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(interval);
        loop {
            tick.tick().await;
            if let Err(err) = ticker.snapshot().await {
                eprintln!("procline-service: snapshot failed: {err}");
            }
        }
    });

    let served = axum::serve(listener, router(state.clone())).with_graceful_shutdown(shutdown()).await;
    if let Err(err) = state.snapshot().await {
        eprintln!("procline-service: final snapshot failed: {err}");
    }
    match served {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("procline-service: {err}");
            std::process::ExitCode::from(1)
        }
    }
}

async fn shutdown() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}
