//! HTTP service for uploading clouds, previewing and committing synthesized
//! defects, and scoring against prototype banks.

pub mod api;
pub mod error;
pub mod store;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use tokio::net::TcpListener;

pub use api::{router, AppState};
pub use error::ApiError;
pub use store::Store;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct StudioConfig {
    /// Persist clouds and banks here; memory-only when `None`.
    pub data_dir: Option<PathBuf>,
    pub upload_limit: usize,
    pub preview_budget: usize,
    pub store_cap: usize,
    /// Origin allowed by CORS; any origin when `None`.
    pub cors_origin: Option<String>,
}

impl Default for StudioConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            upload_limit: 50 * 1024 * 1024,
            preview_budget: 20_000,
            store_cap: 2 * 1024 * 1024 * 1024,
            cors_origin: None,
        }
    }
}

pub fn app_state(config: StudioConfig) -> defectforge_core::Result<AppState> {
    let store = Store::open(config.data_dir.clone(), config.store_cap)?;
    Ok(AppState {
        store: Arc::new(store),
        config: Arc::new(config),
    })
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve<F>(listener: TcpListener, state: AppState, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
