//! Load harness for the trust pipeline service: dataset handling,
//! deterministic valid/invalid request mixes, closed-loop load
//! execution, metric aggregation and report emission.

pub mod corpus;
pub mod dataset;
pub mod host;
pub mod metrics;
pub mod mixer;
pub mod report;
pub mod runner;

use trustlayer_service::config::ServiceConfig;
use trustlayer_service::{build_state, BuildError};

/// Spawns an in-process service on an ephemeral port for self-contained
/// runs. The returned handle keeps the server alive while held.
pub async fn spawn_local_service(
) -> Result<(String, tokio::task::JoinHandle<()>), BuildError> {
    let config = ServiceConfig::default();
    let state = build_state(config)?;
    let (addr, handle) = trustlayer_service::spawn(state, "127.0.0.1:0").await?;
    Ok((format!("http://{addr}"), handle))
}
