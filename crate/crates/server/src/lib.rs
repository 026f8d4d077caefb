//! HTTP API over the moderation gateway, analytics and review loop.

pub mod api;
pub mod config;
pub mod error;
pub mod state;

use std::sync::Arc;

pub use api::router;
pub use config::{ConfigError, ServerConfig};
pub use error::ApiError;
pub use state::{AppState, StartupError};

/// Serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Builds state from `config`, binds its listen address and serves.
pub async fn run(config: ServerConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    let state = Arc::new(AppState::from_config(config)?);
    serve(state, listener).await?;
    Ok(())
}
