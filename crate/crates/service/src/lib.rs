//! HTTP service serving a built atlas, its layout and spectrum, chart
//! synthesis and an optional decoder proxy.
//!
//! The default dataset answers under `/api/...`; every extra dataset in the
//! config answers under `/{name}/api/...` with the same routes.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub mod api;
pub mod config;
pub mod session;

pub use config::{DatasetConfig, ServiceConfig};
pub use session::{HistoryEntry, Session};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Load {
        path: PathBuf,
        #[source]
        source: latmap_core::Error,
    },
    #[error("checksum mismatch: {0}")]
    Mismatch(String),
    #[error("cannot bind port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: std::io::Error,
    },
}

/// Loads every dataset and assembles the routes. Fails on any missing or
/// inconsistent file, before anything is bound.
pub fn router(config: &ServiceConfig) -> Result<Router, ServiceError> {
    let decoder = config
        .decoder_url
        .clone()
        .map(|url| Arc::new(api::Decoder::new(url, Duration::from_millis(config.decoder_timeout_ms))));
    let state = |ds: &DatasetConfig| -> Result<_, ServiceError> {
        Ok(Arc::new(api::DatasetState {
            session: Session::load(ds)?,
            decoder: decoder.clone(),
        }))
    };
    let mut app = api::router(state(&config.default)?);
    for (name, ds) in &config.datasets {
        app = app.nest(&format!("/{name}"), api::router(state(ds)?));
        log::info!("dataset `{name}` mounted at /{name}/api");
    }
    Ok(app)
}

/// Binds `host:port` and serves in the background. Port 0 picks a free
/// port; the bound address is returned.
pub async fn spawn(config: &ServiceConfig) -> Result<(SocketAddr, JoinHandle<std::io::Result<()>>), ServiceError> {
    let app = router(config)?;
    let bind_err = |source| ServiceError::Bind {
        port: config.port,
        source,
    };
    let listener = TcpListener::bind((config.host.as_str(), config.port)).await.map_err(bind_err)?;
    let addr = listener.local_addr().map_err(bind_err)?;
    log::info!("serving on http://{addr}");
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok((addr, handle))
}

/// Serves until the process is stopped. `on_bound` sees the bound address
/// before the first request is accepted.
pub fn run_blocking(config: &ServiceConfig, on_bound: impl FnOnce(SocketAddr)) -> Result<(), ServiceError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| ServiceError::Config(format!("runtime: {e}")))?;
    rt.block_on(async {
        let (addr, handle) = spawn(config).await?;
        on_bound(addr);
        match handle.await {
            Ok(result) => result.map_err(|source| ServiceError::Bind {
                port: config.port,
                source,
            }),
            Err(e) => Err(ServiceError::Config(format!("server task: {e}"))),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholder_is_deterministic_svg() {
        let a = api::placeholder_svg(&[0.5, -1.0, 3.0]);
        assert_eq!(a, api::placeholder_svg(&[0.5, -1.0, 3.0]));
        assert!(a.starts_with("<svg"));
        assert_ne!(a, api::placeholder_svg(&[-0.5, -1.0, 3.0]));
    }
}
