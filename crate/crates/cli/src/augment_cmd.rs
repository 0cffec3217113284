use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Subcommand, ValueEnum};
use memeguard_augment::{Agents, Pipeline, PipelineOptions, RenderMode, SimilarityMode, DEFAULT_JACCARD_THRESHOLD};
use memeguard_core::Split;

#[derive(Subcommand)]
pub enum AugmentCommand {
    /// Run the pipeline over every hateful record of the manifest(s).
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Render {
    Remote,
    Local,
}

#[derive(Clone, Copy, ValueEnum)]
enum Similarity {
    Judge,
    Jaccard,
}

#[derive(Args)]
pub struct RunArgs {
    /// Input manifest; repeat to concatenate.
    #[arg(long = "manifest", required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Backend config (TOML).
    #[arg(long)]
    backend: PathBuf,
    #[arg(long, value_enum, default_value = "remote")]
    render: Render,
    /// With remote rendering, mark failures instead of drawing the caption locally.
    #[arg(long)]
    no_fallback: bool,
    #[arg(long, value_enum, default_value = "judge")]
    similarity: Similarity,
    /// Jaccard pass threshold.
    #[arg(long, default_value_t = DEFAULT_JACCARD_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Extra queries after an unparseable verdict or rejected rewrite.
    #[arg(long, default_value_t = 2)]
    retry_budget: u32,
    /// Keep finished records from a previous run in --out.
    #[arg(long)]
    resume: bool,
    /// Only augment these splits.
    #[arg(long = "split")]
    splits: Vec<Split>,
    /// Response cache directory; defaults to the config's, else <out>/cache.
    #[arg(long)]
    cache: Option<PathBuf>,
}

pub fn run(cmd: AugmentCommand) -> Result<()> {
    let AugmentCommand::Run(args) = cmd;
    if args.workers == 0 {
        bail!("--workers must be at least 1");
    }
    let options = PipelineOptions {
        render: match args.render {
            Render::Remote => RenderMode::Remote {
                fallback: !args.no_fallback,
            },
            Render::Local => RenderMode::Local,
        },
        similarity: match args.similarity {
            Similarity::Judge => SimilarityMode::Judge,
            Similarity::Jaccard => SimilarityMode::Jaccard {
                threshold: args.threshold,
            },
        },
        workers: args.workers,
        retry_budget: args.retry_budget,
        resume: args.resume,
        splits: (!args.splits.is_empty()).then_some(args.splits),
        ..PipelineOptions::default()
    };
    let input = crate::inputs::load_inputs(&args.manifests)?;
    let (config, gateway) = crate::inputs::gateway(&args.backend, args.cache.as_deref(), &args.out.join("cache"))?;
    let agents = Agents::from_config(&config, &options)?;
    let pipeline = Pipeline::new(&gateway, agents, options)?;
    let output = pipeline.run(&input, &args.out)?;
    print!("{}", output.funnel.to_text());
    println!("backend calls: {}", gateway.backend_calls());
    Ok(())
}
