use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;
use trustlayer_harness::dataset;
use trustlayer_harness::host::HostMonitor;
use trustlayer_harness::metrics::{ordering_violations, stability_violations, LevelMetrics, Sample};
use trustlayer_harness::mixer;
use trustlayer_harness::report;
use trustlayer_harness::runner::{run_experiment, ExperimentPlan, LevelRun};
use trustlayer_harness::spawn_local_service;

/// Invariant threshold: per-layer throughput CoV across levels.
const STABILITY_COV: f64 = 0.35;

#[derive(Parser)]
#[command(name = "trustbench", about = "Load and conformance harness for the trust pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a concurrency sweep and write reports.
    Run {
        /// Comma-separated concurrency levels, strictly ascending.
        #[arg(long, value_delimiter = ',', default_value = "25,50,75,100,125")]
        levels: Vec<usize>,
        /// Seconds per level.
        #[arg(long, default_value_t = 30)]
        duration_s: u64,
        /// 1 = handshake per request, 2 = session reuse, both = the two
        /// sweeps back to back.
        #[arg(long, default_value = "2")]
        config: String,
        /// Fraction of requests drawn from the invalid corpus.
        #[arg(long, default_value_t = 0.0)]
        invalid_ratio: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Dataset CSV; the bundled 1000-row fixture when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Target service; spawns an in-process one when omitted.
        #[arg(long)]
        base_url: Option<String>,
        #[arg(long, default_value = "tst")]
        network_hrp: String,
        /// Report directory.
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
    /// Preview the deterministic request mix for a seed.
    Corpus {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        total: usize,
        #[arg(long, default_value_t = 0.5)]
        invalid_ratio: f64,
        /// Exact mode: this many valid items.
        #[arg(long)]
        valid: Option<usize>,
        /// Exact mode: this many invalid items, split over the classes.
        #[arg(long)]
        invalid: Option<usize>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Rebuild summary.csv from a saved metrics.json.
    Report {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
}

fn load_records(path: Option<&PathBuf>) -> Result<Vec<trustlayer_core::schema::TransactionRecord>, String> {
    match path {
        Some(p) => dataset::load_dataset(p).map_err(|e| e.to_string()),
        None => Ok(dataset::load_embedded()),
    }
}

fn parse_configs(raw: &str) -> Result<Vec<u8>, String> {
    match raw {
        "1" => Ok(vec![1]),
        "2" => Ok(vec![2]),
        "both" => Ok(vec![1, 2]),
        other => Err(format!("config must be 1, 2 or both, not '{other}'")),
    }
}

fn print_metrics_table(metrics: &[LevelMetrics]) {
    println!(
        "{:<7} {:<6} {:>7} {:>8} {:>8} {:>9} {:>8} {:>9} {:>9} {:>9}",
        "config", "level", "sent", "stored", "rejected", "timeouts", "rps", "mean_ms", "p95_ms", "p99_ms"
    );
    for m in metrics {
        println!(
            "{:<7} {:<6} {:>7} {:>8} {:>8} {:>9} {:>8.1} {:>9.2} {:>9.2} {:>9.2}",
            m.config, m.level, m.sent, m.stored, m.rejected, m.timeouts,
            m.throughput_rps, m.mean_ms, m.p95_ms, m.p99_ms
        );
    }
}

fn collect_run_violations(runs: &[LevelRun], invalid_ratio: f64) -> Vec<String> {
    let mut violations = Vec::new();
    for run in runs {
        violations.extend(run.metrics.violations());
        for mis in run.misclassified.iter().take(10) {
            violations.push(format!(
                "level {}: {} answered {} {:?}, expected {} {}",
                run.metrics.level,
                mis.class.name(),
                mis.status,
                mis.code,
                mis.class.expected_status(),
                mis.class.expected_code()
            ));
        }
        if run.misclassified.len() > 10 {
            violations.push(format!(
                "level {}: ... and {} more misclassifications",
                run.metrics.level,
                run.misclassified.len() - 10
            ));
        }
        let accepted_valid = run
            .samples
            .iter()
            .filter(|s| s.kind == "valid" && s.status == 201)
            .count() as u64;
        if run.stored_delta != accepted_valid {
            violations.push(format!(
                "level {}: stored {} records but accepted {} valid requests",
                run.metrics.level, run.stored_delta, accepted_valid
            ));
        }
        if invalid_ratio == 0.0 && run.metrics.stored != run.metrics.completed {
            violations.push(format!(
                "level {}: {} of {} clean requests rejected",
                run.metrics.level,
                run.metrics.rejected,
                run.metrics.completed
            ));
        }
    }
    violations
}

async fn cmd_run(
    levels: Vec<usize>,
    duration_s: u64,
    config: String,
    invalid_ratio: f64,
    seed: u64,
    dataset_path: Option<PathBuf>,
    base_url: Option<String>,
    network_hrp: String,
    out: PathBuf,
) -> Result<bool, String> {
    let configs = parse_configs(&config)?;
    let records = load_records(dataset_path.as_ref())?;

    let mut _local = None;
    let base = match base_url {
        Some(url) => url,
        None => {
            let (url, handle) = spawn_local_service().await.map_err(|e| e.to_string())?;
            _local = Some(handle);
            println!("spawned in-process service at {url}");
            url
        }
    };

    let monitor = HostMonitor::start();
    let mut all_metrics: Vec<LevelMetrics> = Vec::new();
    let mut all_samples: Vec<(u8, usize, Vec<Sample>)> = Vec::new();
    let mut violations: Vec<String> = Vec::new();
    let mut per_config: Vec<(u8, Vec<LevelMetrics>)> = Vec::new();

    for config in configs {
        let plan = ExperimentPlan {
            levels: levels.clone(),
            duration: Duration::from_secs(duration_s),
            config,
            invalid_ratio,
            seed,
        };
        println!(
            "running config {config}: levels {:?}, {}s per level, invalid ratio {invalid_ratio}",
            plan.levels, duration_s
        );
        let runs = run_experiment(&plan, &base, &network_hrp, &records)
            .await
            .map_err(|e| e.to_string())?;
        violations.extend(collect_run_violations(&runs, invalid_ratio));
        let metrics: Vec<LevelMetrics> = runs.iter().map(|r| r.metrics.clone()).collect();
        if invalid_ratio == 0.0 && metrics.len() >= 2 {
            violations.extend(stability_violations(&metrics, STABILITY_COV));
        }
        for run in runs {
            all_samples.push((config, run.metrics.level, run.samples));
        }
        per_config.push((config, metrics.clone()));
        all_metrics.extend(metrics);
    }

    if let (Some((_, c1)), Some((_, c2))) = (
        per_config.iter().find(|(c, _)| *c == 1),
        per_config.iter().find(|(c, _)| *c == 2),
    ) {
        violations.extend(ordering_violations(c1, c2));
    }

    let host = monitor.stop();
    print_metrics_table(&all_metrics);
    if let (Some(rss), Some(cpu)) = (host.max_rss_mib, host.mean_cpu_percent) {
        println!("host (informational): peak rss {rss:.0} MiB, mean cpu {cpu:.0}%");
    }

    let files = report::emit_report(&all_metrics, &all_samples, Some(&host), &out)
        .map_err(|e| e.to_string())?;
    println!("wrote {} report files under {}", files.len(), out.display());

    for v in &violations {
        eprintln!("invariant violated: {v}");
    }
    Ok(violations.is_empty())
}

fn cmd_corpus(
    seed: u64,
    total: usize,
    invalid_ratio: f64,
    valid: Option<usize>,
    invalid: Option<usize>,
    dataset_path: Option<PathBuf>,
) -> Result<(), String> {
    let records = load_records(dataset_path.as_ref())?;
    let mix = match (valid, invalid) {
        (Some(v), Some(i)) => mixer::build_exact_mix(&records, v, i, seed),
        (None, None) => mixer::build_mix(&records, invalid_ratio, total, seed),
        _ => return Err("--valid and --invalid must be given together".into()),
    };
    let counts = mixer::mix_counts(&mix);
    println!("{:<22} {:>6}  {:>6}  {}", "kind", "count", "status", "code");
    for (kind, count) in &counts {
        match trustlayer_harness::corpus::InvalidClass::from_name(kind) {
            Some(class) => println!(
                "{:<22} {:>6}  {:>6}  {}",
                kind,
                count,
                class.expected_status(),
                class.expected_code()
            ),
            None => println!("{:<22} {:>6}  {:>6}  -", kind, count, 201),
        }
    }
    println!("total {} items, seed {seed}", mix.len());
    Ok(())
}

fn cmd_report(metrics_path: PathBuf, out: PathBuf) -> Result<(), String> {
    let file = report::read_metrics_json(&metrics_path).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let summary = out.join("summary.csv");
    report::write_summary(&file.levels, &summary).map_err(|e| e.to_string())?;
    print_metrics_table(&file.levels);
    if let Some(host) = &file.host {
        if let (Some(rss), Some(cpu)) = (host.max_rss_mib, host.mean_cpu_percent) {
            println!("host (informational): peak rss {rss:.0} MiB, mean cpu {cpu:.0}%");
        }
    }
    println!("wrote {}", summary.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: Result<bool, String> = match cli.command {
        Command::Run {
            levels,
            duration_s,
            config,
            invalid_ratio,
            seed,
            dataset,
            base_url,
            network_hrp,
            out,
        } => {
            let runtime = match tokio::runtime::Runtime::new() {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("trustbench: {e}");
                    return ExitCode::FAILURE;
                }
            };
            runtime.block_on(cmd_run(
                levels,
                duration_s,
                config,
                invalid_ratio,
                seed,
                dataset,
                base_url,
                network_hrp,
                out,
            ))
        }
        Command::Corpus {
            seed,
            total,
            invalid_ratio,
            valid,
            invalid,
            dataset,
        } => cmd_corpus(seed, total, invalid_ratio, valid, invalid, dataset).map(|()| true),
        Command::Report { metrics, out } => cmd_report(metrics, out).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(message) => {
            eprintln!("trustbench: {message}");
            ExitCode::FAILURE
        }
    }
}
