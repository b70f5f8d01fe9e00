//! Sample aggregation and invariant checks.
//!
//! One `Sample` per completed request; `LevelMetrics` condenses a
//! level's samples into throughput, latency percentiles and per-layer
//! figures. Latency is measured client-side, request start to last
//! byte, on a monotonic clock. The layer figures come from server-side
//! timing headers; a request is attributed to every layer it reached,
//! worked out from its response status.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub latency_us: u64,
    pub layer_us: [u64; 3],
    pub status: u16,
    pub code: Option<String>,
    /// "valid" or the invalid-class name.
    pub kind: &'static str,
}

impl Sample {
    /// Which layers processed this request. The session check runs for
    /// every data submission; 401 ends there. 422 means the credential
    /// check ran and refused. Only stored (201) or storage-failed (500)
    /// requests reached the anchoring layer. Handshake-stage requests
    /// are all layer-1 work.
    pub fn layers_reached(&self) -> [bool; 3] {
        match self.status {
            201 | 500 => [true, true, true],
            422 => [true, true, false],
            _ => [true, false, false],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub config: u8,
    pub level: usize,
    pub duration_s: f64,
    pub sent: u64,
    pub completed: u64,
    pub timeouts: u64,
    /// Requests answered 201.
    pub stored: u64,
    /// Completed requests answered anything else.
    pub rejected: u64,
    pub errors_by_code: BTreeMap<String, u64>,
    pub throughput_rps: f64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    /// Mean time inside each layer, over requests that reached it.
    pub layer_mean_ms: [f64; 3],
    /// Requests that reached each layer.
    pub layer_completed: [u64; 3],
    /// Per-layer processing rate: requests through that layer per second.
    pub layer_rps: [f64; 3],
}

/// Nearest-rank percentile over an already sorted slice.
pub fn percentile(sorted: &[u64], q: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (q / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Population coefficient of variation (stddev / mean).
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    let variance =
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    variance.sqrt() / mean
}

impl LevelMetrics {
    pub fn from_samples(
        config: u8,
        level: usize,
        duration_s: f64,
        sent: u64,
        timeouts: u64,
        samples: &[Sample],
    ) -> LevelMetrics {
        let completed = samples.len() as u64;
        let stored = samples.iter().filter(|s| s.status == 201).count() as u64;
        let mut errors_by_code = BTreeMap::new();
        for sample in samples {
            if let Some(code) = &sample.code {
                *errors_by_code.entry(code.clone()).or_insert(0) += 1;
            }
        }

        let mut latencies: Vec<u64> = samples.iter().map(|s| s.latency_us).collect();
        latencies.sort_unstable();
        let to_ms = |us: u64| us as f64 / 1000.0;
        let mean_ms = if latencies.is_empty() {
            0.0
        } else {
            to_ms(latencies.iter().sum::<u64>() / latencies.len() as u64)
        };

        let mut layer_sum = [0u64; 3];
        let mut layer_completed = [0u64; 3];
        for sample in samples {
            let reached = sample.layers_reached();
            for i in 0..3 {
                if reached[i] {
                    layer_completed[i] += 1;
                    layer_sum[i] += sample.layer_us[i];
                }
            }
        }
        let mut layer_mean_ms = [0.0; 3];
        let mut layer_rps = [0.0; 3];
        for i in 0..3 {
            if layer_completed[i] > 0 {
                layer_mean_ms[i] = to_ms(layer_sum[i] / layer_completed[i]);
            }
            if duration_s > 0.0 {
                layer_rps[i] = layer_completed[i] as f64 / duration_s;
            }
        }

        LevelMetrics {
            config,
            level,
            duration_s,
            sent,
            completed,
            timeouts,
            stored,
            rejected: completed - stored,
            errors_by_code,
            throughput_rps: if duration_s > 0.0 {
                completed as f64 / duration_s
            } else {
                0.0
            },
            mean_ms,
            p50_ms: to_ms(percentile(&latencies, 50.0)),
            p95_ms: to_ms(percentile(&latencies, 95.0)),
            p99_ms: to_ms(percentile(&latencies, 99.0)),
            max_ms: to_ms(latencies.last().copied().unwrap_or(0)),
            layer_mean_ms,
            layer_completed,
            layer_rps,
        }
    }

    /// Per-level bookkeeping invariants. Empty means clean.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let at = format!("config {} level {}", self.config, self.level);
        if self.completed + self.timeouts != self.sent {
            out.push(format!(
                "{at}: conservation broken: {} completed + {} timeouts != {} sent",
                self.completed, self.timeouts, self.sent
            ));
        }
        if self.stored + self.rejected != self.completed {
            out.push(format!(
                "{at}: {} stored + {} rejected != {} completed",
                self.stored, self.rejected, self.completed
            ));
        }
        let errors: u64 = self.errors_by_code.values().sum();
        if errors != self.rejected {
            out.push(format!(
                "{at}: error counts {} do not cover rejected {}",
                errors, self.rejected
            ));
        }
        if !(self.p50_ms <= self.p95_ms && self.p95_ms <= self.p99_ms && self.p99_ms <= self.max_ms)
        {
            out.push(format!(
                "{at}: percentiles not monotone: p50 {} p95 {} p99 {} max {}",
                self.p50_ms, self.p95_ms, self.p99_ms, self.max_ms
            ));
        }
        out
    }
}

/// Cross-level throughput stability: for each layer, the coefficient of
/// variation of its processing rate across levels must stay under the
/// threshold.
pub fn stability_violations(levels: &[LevelMetrics], threshold: f64) -> Vec<String> {
    let mut out = Vec::new();
    if levels.len() < 2 {
        return out;
    }
    for layer in 0..3 {
        let rates: Vec<f64> = levels.iter().map(|m| m.layer_rps[layer]).collect();
        let cov = coefficient_of_variation(&rates);
        if cov >= threshold {
            out.push(format!(
                "layer {} throughput varies too much across levels: cov {:.3} >= {:.2} (rates {:?})",
                layer + 1,
                cov,
                threshold,
                rates.iter().map(|r| r.round()).collect::<Vec<_>>()
            ));
        }
    }
    out
}

/// Session reuse must not cost more than the per-request handshake:
/// config 2 mean and p95 at or below config 1 at every level >= 50, and
/// the latency gap must widen with load (ratio at the top level at
/// least the ratio at the lowest compared level).
pub fn ordering_violations(config1: &[LevelMetrics], config2: &[LevelMetrics]) -> Vec<String> {
    let mut out = Vec::new();
    let mut ratios: Vec<(usize, f64)> = Vec::new();
    for c1 in config1.iter().filter(|m| m.level >= 50) {
        let Some(c2) = config2.iter().find(|m| m.level == c1.level) else {
            continue;
        };
        if c2.mean_ms > c1.mean_ms {
            out.push(format!(
                "level {}: reuse mean {:.2} ms exceeds per-request mean {:.2} ms",
                c1.level, c2.mean_ms, c1.mean_ms
            ));
        }
        if c2.p95_ms > c1.p95_ms {
            out.push(format!(
                "level {}: reuse p95 {:.2} ms exceeds per-request p95 {:.2} ms",
                c1.level, c2.p95_ms, c1.p95_ms
            ));
        }
        if c2.mean_ms > 0.0 {
            ratios.push((c1.level, c1.mean_ms / c2.mean_ms));
        }
    }
    if ratios.len() >= 2 {
        ratios.sort_by_key(|(level, _)| *level);
        let (low_level, low) = ratios[0];
        let (high_level, high) = ratios[ratios.len() - 1];
        if high < low {
            out.push(format!(
                "latency gap narrows under load: ratio {high:.2} at level {high_level} \
                 < ratio {low:.2} at level {low_level}"
            ));
        }
    }
    out
}
