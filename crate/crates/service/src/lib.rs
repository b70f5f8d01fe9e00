//! HTTP service wiring for the trust pipeline.
//!
//! One process hosts four surfaces: the credential issuer, the trust
//! layer (challenges, sessions, data intake), the simulated ledger
//! network (block submission and lookup, so out-of-process sources can
//! anchor their identities), and verified record retrieval.

pub mod client;
pub mod config;
pub mod issuer;
pub mod routes;

use config::{ConfigError, ServiceConfig, StoreBackend};
use issuer::{IssuerPolicy, IssuerService};
use std::sync::Arc;
use thiserror::Error;
use trustlayer_core::identity::IdentityError;
use trustlayer_core::ledger::{Ledger, LedgerError};
use trustlayer_core::pipeline::{TrustConfig, TrustLayer};
use trustlayer_core::schema::{RecordSchema, SchemaError};
use trustlayer_core::storage::{FileStore, MemoryStore, RecordStore, StoreError};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("ledger: {0}")]
    Ledger(#[from] LedgerError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("schema: {0}")]
    Schema(#[from] SchemaError),
    #[error("identity: {0}")]
    Identity(#[from] IdentityError),
    #[error("bind: {0}")]
    Bind(#[from] std::io::Error),
}

struct AppInner {
    config: ServiceConfig,
    trust: TrustLayer,
    issuer: IssuerService,
    ledger: Ledger,
    store: Box<dyn RecordStore>,
    schema: RecordSchema,
}

/// Shared handle to everything the handlers need.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<AppInner>,
}

impl AppState {
    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn trust(&self) -> &TrustLayer {
        &self.inner.trust
    }

    pub fn issuer(&self) -> &IssuerService {
        &self.inner.issuer
    }

    pub fn ledger(&self) -> &Ledger {
        &self.inner.ledger
    }

    pub fn store(&self) -> &dyn RecordStore {
        self.inner.store.as_ref()
    }

    pub fn schema(&self) -> &RecordSchema {
        &self.inner.schema
    }
}

/// Validates the configuration and assembles the running state: opens
/// the ledger and store, bootstraps the issuer and trust layer
/// identities, loads the schema.
pub fn build_state(config: ServiceConfig) -> Result<AppState, BuildError> {
    config.validate()?;

    let ledger = match &config.ledger_log {
        Some(path) => Ledger::open(path)?,
        None => Ledger::in_memory(),
    };
    let store: Box<dyn RecordStore> = match config.store.backend {
        StoreBackend::Memory => Box::new(MemoryStore::new()),
        StoreBackend::File => Box::new(FileStore::open(
            config.store.path.as_ref().expect("validated by config"),
        )?),
    };
    let schema = match &config.schema_path {
        Some(path) => RecordSchema::from_file(path)?,
        None => RecordSchema::transaction_default(),
    };

    let issuer = IssuerService::bootstrap(
        &config.network_hrp,
        IssuerPolicy::from_config(&config.issuer),
        &ledger,
    )?;

    let mut trusted_issuers: std::collections::HashSet<_> = config
        .trusted_issuers
        .iter()
        .map(|d| d.parse().expect("validated by config"))
        .collect();
    trusted_issuers.insert(issuer.did().clone());

    let trust = TrustLayer::bootstrap(
        &config.network_hrp,
        TrustConfig {
            challenge_ttl_ms: config.challenge_ttl_ms,
            session_ttl_ms: config.session_ttl_ms,
            trusted_issuers,
        },
        &ledger,
    )?;

    Ok(AppState {
        inner: Arc::new(AppInner {
            config,
            trust,
            issuer,
            ledger,
            store,
            schema,
        }),
    })
}

/// Binds `listen` and serves until the task is dropped or the process
/// stops. Returns the bound address (useful with port 0) and the server
/// task handle.
pub async fn spawn(
    state: AppState,
    listen: &str,
) -> std::io::Result<(std::net::SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    let addr = listener.local_addr()?;
    let router = routes::build_router(state);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            tracing::error!(error = %e, "server stopped");
        }
    });
    Ok((addr, handle))
}

/// Serves on the configured address until ctrl-c.
pub async fn run(config: ServiceConfig) -> Result<(), BuildError> {
    let listen = config.listen.clone();
    let state = build_state(config)?;
    let (addr, handle) = spawn(state, &listen).await?;
    tracing::info!(%addr, "listening");
    tokio::select! {
        _ = tokio::signal::ctrl_c() => {
            tracing::info!("shutting down");
        }
        _ = handle => {}
    }
    Ok(())
}
