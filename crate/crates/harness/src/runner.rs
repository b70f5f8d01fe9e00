//! Closed-loop load execution.
//!
//! A run keeps exactly `workers` requests in flight: every worker owns a
//! registered source identity and loops pulling the next work item from
//! a shared cursor until the deadline (or until a finite queue drains).
//! Workers share nothing else; samples are merged after the run.

use crate::corpus::{self, InvalidClass};
use crate::metrics::{LevelMetrics, Sample};
use crate::mixer::{build_mix, WorkItem};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;
use tokio::task::JoinSet;
use trustlayer_core::schema::TransactionRecord;
use trustlayer_service::client::{ClientError, SourceClient, VerifyMode};

const ONBOARDING_DOC: &[u8] = b"load harness onboarding dossier";

/// Work items in the wrap-around mix per level; workers cycle through.
pub const MIX_WRAP_LEN: usize = 8192;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("worker failed: {0}")]
    Worker(String),
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub levels: Vec<usize>,
    pub duration: Duration,
    /// 1 = full handshake per request, 2 = session reuse.
    pub config: u8,
    pub invalid_ratio: f64,
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            levels: vec![25, 50, 75, 100, 125],
            duration: Duration::from_secs(30),
            config: 2,
            invalid_ratio: 0.0,
            seed: 42,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), String> {
        if self.levels.is_empty() {
            return Err("at least one concurrency level required".into());
        }
        if self.levels.iter().any(|&l| l == 0) {
            return Err("concurrency levels must be positive".into());
        }
        if !self.levels.windows(2).all(|w| w[0] < w[1]) {
            return Err("concurrency levels must be strictly ascending".into());
        }
        if self.duration.is_zero() {
            return Err("duration must be positive".into());
        }
        if !(1..=2).contains(&self.config) {
            return Err("config must be 1 or 2".into());
        }
        if !(0.0..=1.0).contains(&self.invalid_ratio) {
            return Err("invalid ratio must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn mode(&self) -> VerifyMode {
        match self.config {
            1 => VerifyMode::PerRequest,
            _ => VerifyMode::SessionReuse,
        }
    }
}

/// An invalid request the service answered with the wrong status/code.
#[derive(Debug, Clone)]
pub struct Misclassification {
    pub class: InvalidClass,
    pub status: u16,
    pub code: Option<String>,
}

pub struct LevelRun {
    pub metrics: LevelMetrics,
    pub samples: Vec<Sample>,
    pub misclassified: Vec<Misclassification>,
    /// How many records the service gained during the run.
    pub stored_delta: u64,
    /// Valid work items executed.
    pub valid_sent: u64,
}

pub struct LoadSpec {
    pub base_url: String,
    pub network_hrp: String,
    pub mode: VerifyMode,
    pub workers: usize,
    pub duration: Option<Duration>,
    /// Cycle through the mix (`true`) or stop once it drains.
    pub wrap: bool,
    pub config_label: u8,
}

#[derive(Default)]
struct WorkerResult {
    samples: Vec<Sample>,
    sent: u64,
    timeouts: u64,
    valid_sent: u64,
    misclassified: Vec<Misclassification>,
}

async fn worker_loop(
    mut client: SourceClient,
    accomplice: Arc<SourceClient>,
    mix: Arc<Vec<WorkItem>>,
    cursor: Arc<AtomicUsize>,
    deadline: Option<Instant>,
    wrap: bool,
) -> Result<WorkerResult, ClientError> {
    let mut result = WorkerResult::default();
    loop {
        if let Some(d) = deadline {
            if Instant::now() >= d {
                break;
            }
        }
        let index = cursor.fetch_add(1, Ordering::Relaxed);
        if !wrap && index >= mix.len() {
            break;
        }
        let item = &mix[index % mix.len()];
        result.sent += 1;
        match item {
            WorkItem::Valid(record) => {
                result.valid_sent += 1;
                let started = Instant::now();
                match client.submit_record(record).await {
                    Ok(outcome) => result.samples.push(Sample {
                        latency_us: outcome.latency.as_micros() as u64,
                        layer_us: outcome.layer_us,
                        status: outcome.status,
                        code: outcome.error_code,
                        kind: "valid",
                    }),
                    // The handshake itself was refused: still a server
                    // response, recorded under its code.
                    Err(ClientError::Api { status, code, .. }) => result.samples.push(Sample {
                        latency_us: started.elapsed().as_micros() as u64,
                        layer_us: [0; 3],
                        status,
                        code: Some(code),
                        kind: "valid",
                    }),
                    Err(ClientError::Transport(_)) => result.timeouts += 1,
                    Err(other) => return Err(other),
                }
            }
            WorkItem::Invalid(class, record) => {
                let started = Instant::now();
                match corpus::execute(*class, &mut client, &accomplice, record).await {
                    Ok(outcome) => {
                        if !outcome.matches_expectation() {
                            result.misclassified.push(Misclassification {
                                class: *class,
                                status: outcome.status,
                                code: outcome.code.clone(),
                            });
                        }
                        result.samples.push(Sample {
                            latency_us: outcome.latency.as_micros() as u64,
                            layer_us: [0; 3],
                            status: outcome.status,
                            code: outcome.code,
                            kind: class.name(),
                        });
                    }
                    // A setup sub-request was refused; that response
                    // completes the item but cannot match its class.
                    Err(ClientError::Api { status, code, .. }) => {
                        result.misclassified.push(Misclassification {
                            class: *class,
                            status,
                            code: Some(code.clone()),
                        });
                        result.samples.push(Sample {
                            latency_us: started.elapsed().as_micros() as u64,
                            layer_us: [0; 3],
                            status,
                            code: Some(code),
                            kind: class.name(),
                        });
                    }
                    Err(ClientError::Transport(_)) => result.timeouts += 1,
                    Err(other) => return Err(other),
                }
            }
        }
    }
    Ok(result)
}

async fn register_client(
    base_url: &str,
    network_hrp: &str,
    mode: VerifyMode,
) -> Result<SourceClient, ClientError> {
    let mut client = SourceClient::new(base_url, network_hrp, mode)?;
    client.register(ONBOARDING_DOC).await?;
    Ok(client)
}

/// Runs one load window against an already-running service.
pub async fn run_load(spec: &LoadSpec, mix: Vec<WorkItem>) -> Result<LevelRun, RunError> {
    let mut registrations = JoinSet::new();
    for _ in 0..spec.workers {
        let base = spec.base_url.clone();
        let hrp = spec.network_hrp.clone();
        let mode = spec.mode;
        registrations.spawn(async move { register_client(&base, &hrp, mode).await });
    }
    let mut clients = Vec::with_capacity(spec.workers);
    while let Some(joined) = registrations.join_next().await {
        clients.push(joined.map_err(|e| RunError::Worker(e.to_string()))??);
    }
    let accomplice = Arc::new(
        register_client(&spec.base_url, &spec.network_hrp, VerifyMode::SessionReuse).await?,
    );

    let stored_before = stored_count(&accomplice).await?;
    let mix = Arc::new(mix);
    let cursor = Arc::new(AtomicUsize::new(0));
    let started = Instant::now();
    let deadline = spec.duration.map(|d| started + d);

    let mut workers = JoinSet::new();
    for client in clients {
        workers.spawn(worker_loop(
            client,
            accomplice.clone(),
            mix.clone(),
            cursor.clone(),
            deadline,
            spec.wrap,
        ));
    }
    let mut samples = Vec::new();
    let mut sent = 0;
    let mut timeouts = 0;
    let mut valid_sent = 0;
    let mut misclassified = Vec::new();
    while let Some(joined) = workers.join_next().await {
        let mut result = joined.map_err(|e| RunError::Worker(e.to_string()))??;
        samples.append(&mut result.samples);
        sent += result.sent;
        timeouts += result.timeouts;
        valid_sent += result.valid_sent;
        misclassified.append(&mut result.misclassified);
    }
    let wall = started.elapsed();
    let stored_after = stored_count(&accomplice).await?;

    let metrics = LevelMetrics::from_samples(
        spec.config_label,
        spec.workers,
        wall.as_secs_f64(),
        sent,
        timeouts,
        &samples,
    );
    Ok(LevelRun {
        metrics,
        samples,
        misclassified,
        stored_delta: stored_after.saturating_sub(stored_before),
        valid_sent,
    })
}

async fn stored_count(client: &SourceClient) -> Result<u64, ClientError> {
    Ok(client.stats().await?["records"].as_u64().unwrap_or(0))
}

/// Sweeps every level in the plan against `base_url`.
pub async fn run_experiment(
    plan: &ExperimentPlan,
    base_url: &str,
    network_hrp: &str,
    records: &[TransactionRecord],
) -> Result<Vec<LevelRun>, RunError> {
    plan.validate().map_err(RunError::Plan)?;
    let mut runs = Vec::with_capacity(plan.levels.len());
    for &level in &plan.levels {
        let mix = build_mix(
            records,
            plan.invalid_ratio,
            MIX_WRAP_LEN,
            plan.seed ^ level as u64,
        );
        let spec = LoadSpec {
            base_url: base_url.to_string(),
            network_hrp: network_hrp.to_string(),
            mode: plan.mode(),
            workers: level,
            duration: Some(plan.duration),
            wrap: true,
            config_label: plan.config,
        };
        runs.push(run_load(&spec, mix).await?);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_validation_catches_bad_inputs() {
        let ok = ExperimentPlan::default();
        assert!(ok.validate().is_ok());

        let mut p = ExperimentPlan::default();
        p.levels = vec![];
        assert!(p.validate().is_err());

        p = ExperimentPlan::default();
        p.levels = vec![50, 25];
        assert!(p.validate().is_err());

        p = ExperimentPlan::default();
        p.duration = Duration::ZERO;
        assert!(p.validate().is_err());

        p = ExperimentPlan::default();
        p.invalid_ratio = 1.5;
        assert!(p.validate().is_err());

        p = ExperimentPlan::default();
        p.config = 3;
        assert!(p.validate().is_err());
    }

    #[test]
    fn config_maps_to_mode() {
        let mut p = ExperimentPlan::default();
        p.config = 1;
        assert_eq!(p.mode(), VerifyMode::PerRequest);
        p.config = 2;
        assert_eq!(p.mode(), VerifyMode::SessionReuse);
    }
}
