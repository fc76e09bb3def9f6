//! Session service: a module registry, event-sourced session store and the
//! HTTP API over both.

pub mod api;
pub mod journal;
pub mod registry;
pub mod store;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

pub use api::{router, AppState};
pub use registry::{ModuleRegistry, RegistryError};
pub use store::{RecoveryReport, SessionStore, StoreError};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub host: IpAddr,
    /// 0 picks a free port.
    pub port: u16,
    pub modules_dir: PathBuf,
    pub log_dir: PathBuf,
}

impl ServeConfig {
    pub fn new(port: u16, modules_dir: impl Into<PathBuf>, log_dir: impl Into<PathBuf>) -> Self {
        Self {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port,
            modules_dir: modules_dir.into(),
            log_dir: log_dir.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Journal(#[from] journal::JournalError),
    #[error("cannot listen on {0}: {1}")]
    Bind(SocketAddr, std::io::Error),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Loads the registry and replays the session journals.
pub fn open_state(config: &ServeConfig) -> Result<(AppState, RecoveryReport), ServeError> {
    let registry = Arc::new(ModuleRegistry::load_dir(&config.modules_dir)?);
    let (store, report) = SessionStore::open(&config.log_dir, &registry)?;
    Ok((
        AppState {
            registry,
            store: Arc::new(store),
        },
        report,
    ))
}

/// Runs the service until Ctrl-C. Once the socket is bound, prints
/// `listening on http://ADDR` on stdout.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let (state, report) = open_state(&config)?;
    for r in state.registry.reports() {
        if !r.problems.is_empty() {
            tracing::warn!("skipped module file {}", r.to_string().trim_end());
        }
    }
    tracing::info!(
        modules = state.registry.len(),
        restored = report.restored,
        truncated = report.truncated.len(),
        "state loaded"
    );
    let addr = SocketAddr::new(config.host, config.port);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServeError::Bind(addr, e))?;
    let local = listener.local_addr()?;
    {
        use std::io::Write;
        let mut out = std::io::stdout().lock();
        writeln!(out, "listening on http://{local}")?;
        out.flush()?;
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
