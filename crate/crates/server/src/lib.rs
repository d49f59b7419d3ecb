//! Review service and command-line front end for the framepick engine.
//!
//! The service loads each video's published dataset into memory on first
//! use and answers proposal, search, group, image and distribution queries
//! from it. Selections and user keywords go to durable append-only logs
//! next to the bundle.

pub mod api;
pub mod cli;
pub mod embed;
pub mod error;
pub mod images;
pub mod library;
pub mod log;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use tower_http::services::ServeDir;
use tracing::info;

pub use api::router;
pub use error::{ApiError, ApiResult};
pub use library::{Library, LibraryOptions};

/// Bind and serve until Ctrl-C.
pub async fn serve(library: Arc<Library>, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let mut app = router(library);
    if let Some(dir) = static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(addr = %listener.local_addr()?, "listening");
    // print the bound address for wrappers that pass port 0
    println!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await
}
