use std::net::SocketAddr;

use clap::Parser;
use hrsim_live::{router, AppState};

/// Serve live simulation sessions over HTTP and WebSocket.
#[derive(Parser)]
#[command(name = "hrsim-live", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let listener = match tokio::net::TcpListener::bind(args.addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", args.addr);
            std::process::exit(1);
        }
    };
    log::info!("listening on {}", args.addr);
    if let Err(e) = axum::serve(listener, router(AppState::default())).await {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
