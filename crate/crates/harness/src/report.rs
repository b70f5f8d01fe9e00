//! Report files: a summary CSV with one row per (config, level), a raw
//! sample CSV per level, and a metrics JSON that `trustbench report`
//! can turn back into the summary.

use crate::host::HostReport;
use crate::metrics::{LevelMetrics, Sample};
use serde::{Deserialize, Serialize};
use std::io;
use std::path::{Path, PathBuf};

pub const SUMMARY_COLUMNS: [&str; 21] = [
    "config",
    "level",
    "duration_s",
    "sent",
    "completed",
    "timeouts",
    "stored",
    "rejected",
    "throughput_rps",
    "mean_ms",
    "p50_ms",
    "p95_ms",
    "p99_ms",
    "max_ms",
    "l1_mean_ms",
    "l2_mean_ms",
    "l3_mean_ms",
    "l1_rps",
    "l2_rps",
    "l3_rps",
    "errors",
];

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsFile {
    pub levels: Vec<LevelMetrics>,
    pub host: Option<HostReport>,
}

fn error_summary(metrics: &LevelMetrics) -> String {
    metrics
        .errors_by_code
        .iter()
        .map(|(code, count)| format!("{code}={count}"))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_summary(metrics: &[LevelMetrics], path: &Path) -> io::Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(SUMMARY_COLUMNS)?;
    for m in metrics {
        writer.write_record([
            m.config.to_string(),
            m.level.to_string(),
            format!("{:.2}", m.duration_s),
            m.sent.to_string(),
            m.completed.to_string(),
            m.timeouts.to_string(),
            m.stored.to_string(),
            m.rejected.to_string(),
            format!("{:.2}", m.throughput_rps),
            format!("{:.3}", m.mean_ms),
            format!("{:.3}", m.p50_ms),
            format!("{:.3}", m.p95_ms),
            format!("{:.3}", m.p99_ms),
            format!("{:.3}", m.max_ms),
            format!("{:.3}", m.layer_mean_ms[0]),
            format!("{:.3}", m.layer_mean_ms[1]),
            format!("{:.3}", m.layer_mean_ms[2]),
            format!("{:.2}", m.layer_rps[0]),
            format!("{:.2}", m.layer_rps[1]),
            format!("{:.2}", m.layer_rps[2]),
            error_summary(m),
        ])?;
    }
    writer.flush()
}

pub fn write_samples(config: u8, level: usize, samples: &[Sample], dir: &Path) -> io::Result<PathBuf> {
    let path = dir.join(format!("samples_c{config}_l{level}.csv"));
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(["latency_us", "l1_us", "l2_us", "l3_us", "status", "code", "kind"])?;
    for s in samples {
        writer.write_record([
            s.latency_us.to_string(),
            s.layer_us[0].to_string(),
            s.layer_us[1].to_string(),
            s.layer_us[2].to_string(),
            s.status.to_string(),
            s.code.clone().unwrap_or_default(),
            s.kind.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(path)
}

pub fn write_metrics_json(
    metrics: &[LevelMetrics],
    host: Option<&HostReport>,
    path: &Path,
) -> io::Result<()> {
    let file = MetricsFile {
        levels: metrics.to_vec(),
        host: host.cloned(),
    };
    let out = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(io::BufWriter::new(out), &file)?;
    Ok(())
}

pub fn read_metrics_json(path: &Path) -> io::Result<MetricsFile> {
    let raw = std::fs::read(path)?;
    Ok(serde_json::from_slice(&raw)?)
}

/// Writes everything for a finished run into `dir` (created if absent):
/// `summary.csv`, `metrics.json`, and one sample file per level.
pub fn emit_report(
    metrics: &[LevelMetrics],
    samples: &[(u8, usize, Vec<Sample>)],
    host: Option<&HostReport>,
    dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary = dir.join("summary.csv");
    write_summary(metrics, &summary)?;
    written.push(summary);
    let json = dir.join("metrics.json");
    write_metrics_json(metrics, host, &json)?;
    written.push(json);
    for (config, level, level_samples) in samples {
        written.push(write_samples(*config, *level, level_samples, dir)?);
    }
    Ok(written)
}
