//! Process CPU and memory sampling, for information only: the numbers
//! depend entirely on the host, so nothing asserts on them. Reads the
//! Linux proc filesystem and degrades to `None` elsewhere.

use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HostReport {
    /// Peak resident set over the run, mebibytes.
    pub max_rss_mib: Option<f64>,
    /// Mean process CPU over the run; 100 means one core saturated.
    pub mean_cpu_percent: Option<f64>,
    pub samples: usize,
}

fn rss_mib() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

/// Cumulative user+system CPU seconds of this process, all threads.
fn cpu_seconds() -> Option<f64> {
    const TICKS_PER_SECOND: f64 = 100.0;
    let stat = std::fs::read_to_string("/proc/self/stat").ok()?;
    // The command field may contain spaces; skip past its closing paren.
    let rest = stat.rsplit_once(')')?.1;
    let fields: Vec<&str> = rest.split_whitespace().collect();
    // utime and stime are fields 14 and 15 of the full line; after the
    // comm field that leaves 11 and 12 zero-indexed.
    let utime: f64 = fields.get(11)?.parse().ok()?;
    let stime: f64 = fields.get(12)?.parse().ok()?;
    Some((utime + stime) / TICKS_PER_SECOND)
}

pub struct HostMonitor {
    stop: Arc<AtomicBool>,
    handle: std::thread::JoinHandle<HostReport>,
}

impl HostMonitor {
    pub fn start() -> HostMonitor {
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = stop.clone();
        let handle = std::thread::spawn(move || {
            let mut max_rss: Option<f64> = None;
            let mut samples = 0usize;
            let cpu_start = cpu_seconds();
            let wall_start = Instant::now();
            while !stop_flag.load(Ordering::Relaxed) {
                if let Some(rss) = rss_mib() {
                    max_rss = Some(max_rss.map_or(rss, |m: f64| m.max(rss)));
                    samples += 1;
                }
                std::thread::sleep(Duration::from_millis(250));
            }
            let wall = wall_start.elapsed().as_secs_f64();
            let mean_cpu_percent = match (cpu_start, cpu_seconds()) {
                (Some(a), Some(b)) if wall > 0.0 => Some((b - a) / wall * 100.0),
                _ => None,
            };
            HostReport {
                max_rss_mib: max_rss,
                mean_cpu_percent,
                samples,
            }
        });
        HostMonitor { stop, handle }
    }

    pub fn stop(self) -> HostReport {
        self.stop.store(true, Ordering::Relaxed);
        self.handle.join().unwrap_or(HostReport {
            max_rss_mib: None,
            mean_cpu_percent: None,
            samples: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monitor_collects_something_on_linux() {
        let monitor = HostMonitor::start();
        std::thread::sleep(Duration::from_millis(300));
        let report = monitor.stop();
        if cfg!(target_os = "linux") {
            assert!(report.max_rss_mib.unwrap_or(0.0) > 0.0);
            assert!(report.samples >= 1);
        }
    }
}
