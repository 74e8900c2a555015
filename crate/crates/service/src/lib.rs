//! HTTP facade over learning sessions.
//!
//! Every mutating endpoint snapshots the session to the data directory before
//! it responds, so a restarted server resumes exactly where the last
//! acknowledged request left off.

mod api;
mod error;
mod store;

use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use api::{
    router, Advanced, ArchitectureResponse, ArchitectureView, Created, GroupView, SaliencyView, Skipped, Submitted,
};
pub use error::ApiError;
pub use store::{new_session_id, SessionHandle, SessionStore};

pub const DEFAULT_BIND: &str = "127.0.0.1:7878";
pub const DEFAULT_DATA_DIR: &str = "alice-data";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub bind: String,
    pub data_dir: PathBuf,
    /// Relative dataset paths in session configs resolve against this.
    pub dataset_root: Option<PathBuf>,
}

impl ServiceConfig {
    /// Reads `ALICE_BIND` and `ALICE_DATA_DIR`, falling back to defaults.
    pub fn from_env() -> Self {
        Self {
            bind: std::env::var("ALICE_BIND").unwrap_or_else(|_| DEFAULT_BIND.to_string()),
            data_dir: std::env::var_os("ALICE_DATA_DIR").map_or_else(|| DEFAULT_DATA_DIR.into(), PathBuf::from),
            dataset_root: None,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<SessionStore>,
    dataset_root: Option<Arc<PathBuf>>,
}

impl AppState {
    pub fn open(data_dir: &Path, dataset_root: Option<&Path>) -> alice_core::Result<Self> {
        Ok(Self {
            store: Arc::new(SessionStore::open(data_dir)?),
            dataset_root: dataset_root.map(|p| Arc::new(p.to_path_buf())),
        })
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn resolve_dataset(&self, path: &Path) -> PathBuf {
        match &self.dataset_root {
            Some(root) if path.is_relative() && !path.as_os_str().is_empty() => root.join(path),
            _ => path.to_path_buf(),
        }
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
