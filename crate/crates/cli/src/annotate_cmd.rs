use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use memeguard_annotate::{init_store, sample_tasks, serve, Store, StoreConfig, TaskKind};

#[derive(Subcommand)]
pub enum AnnotateCommand {
    /// Sample tasks from a manifest into a new store.
    Sample(SampleArgs),
    /// Serve a store over HTTP.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Print agreement rate and rating histograms.
    Stats {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Rewrite the event log without claim events.
    Compact {
        #[arg(long)]
        store: PathBuf,
    },
}

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// `agreement` or `pair_quality`; repeat for both.
    #[arg(long = "kind", required = true)]
    kinds: Vec<TaskKind>,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = memeguard_core::DEFAULT_SEED)]
    seed: u64,
    /// Collect one response per annotator instead of one per task.
    #[arg(long)]
    multi_annotator: bool,
    /// Seconds a served task stays reserved.
    #[arg(long, default_value_t = 1800)]
    lease_secs: u64,
}

pub fn run(cmd: AnnotateCommand) -> Result<()> {
    match cmd {
        AnnotateCommand::Sample(args) => {
            let input = crate::inputs::load_inputs(std::slice::from_ref(&args.manifest))?;
            let mut tasks = Vec::new();
            for kind in &args.kinds {
                tasks.extend(sample_tasks(&input.manifest, *kind, args.n, args.seed)?);
            }
            let config = StoreConfig {
                multi_annotator: args.multi_annotator,
                lease_secs: args.lease_secs,
                ..StoreConfig::default()
            };
            init_store(&args.store, &input, &tasks, &config)?;
            println!("wrote {} tasks to {}", tasks.len(), args.store.display());
        }
        AnnotateCommand::Serve { store, port, host } => {
            let store = Arc::new(Store::open(&store).with_context(|| format!("opening {}", store.display()))?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(store, SocketAddr::new(host, port)))?;
        }
        AnnotateCommand::Stats { store, json } => {
            let stats = Store::open(&store)?.stats();
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{}", stats.to_text());
            }
        }
        AnnotateCommand::Compact { store } => Store::open(&store)?.compact()?,
    }
    Ok(())
}
