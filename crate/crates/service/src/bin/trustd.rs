use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use trustlayer_core::ledger::Ledger;
use trustlayer_service::config::ServiceConfig;

#[derive(Parser)]
#[command(name = "trustd", about = "Verified open-banking data ingestion service", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        /// TOML config file; TRUSTD_* environment variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Listen address override.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Print a ledger log as blocks and parent edges.
    DumpDag {
        /// Path to the append-only ledger log.
        log: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>, listen: Option<String>) -> Result<ServiceConfig, String> {
    let mut config = match path {
        Some(p) => ServiceConfig::from_file(p).map_err(|e| e.to_string())?,
        None => ServiceConfig::default(),
    };
    config.apply_env().map_err(|e| e.to_string())?;
    if let Some(listen) = listen {
        config.listen = listen;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn dump_dag(path: &PathBuf) -> Result<(), String> {
    let ledger = Ledger::open(path).map_err(|e| e.to_string())?;
    let stats = ledger.stats();
    println!(
        "blocks={} alias={} data={} tips={}",
        stats.blocks, stats.alias_blocks, stats.data_blocks, stats.tips
    );
    for block in ledger.blocks_in_order() {
        let kind = match &block.payload {
            trustlayer_core::ledger::BlockPayload::Alias(a) => {
                format!("alias {}", a.document.id)
            }
            trustlayer_core::ledger::BlockPayload::DataHash { digest } => {
                format!("data {}", digest.to_hex())
            }
        };
        println!("#{} {} {}", block.sequence, block.block_id.to_hex(), kind);
        for parent in &block.parents {
            println!("    <- {}", parent.to_hex());
        }
    }
    let violations = ledger.check_invariants();
    if violations.is_empty() {
        println!("invariants ok");
        return Ok(());
    }
    Err(violations.join("; "))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve { config, listen } => match load_config(config.as_ref(), listen) {
            Ok(config) => {
                let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
                runtime
                    .block_on(trustlayer_service::run(config))
                    .map_err(|e| e.to_string())
            }
            Err(e) => Err(e),
        },
        Command::DumpDag { log } => dump_dag(&log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("trustd: {message}");
            ExitCode::FAILURE
        }
    }
}
