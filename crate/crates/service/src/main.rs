use std::net::SocketAddr;

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt().init();
    let addr: SocketAddr = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "127.0.0.1:8591".into())
        .parse()
        .expect("ADDR argument must be host:port");
    if let Err(e) = tension_service::serve(addr).await {
        eprintln!("server error: {e}");
        std::process::exit(1);
    }
}
