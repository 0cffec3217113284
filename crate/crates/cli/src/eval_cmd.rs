use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use memeguard_core::{filter_configs, sniff_extension, ImageStore, LearningType, Manifest, Split, Strategy};
use memeguard_eval::{
    export_training, report_table, run_matrix, run_teacher, write_outputs, Classifiers, EvalOptions, ExportOptions,
};
use memeguard_gateway::AgentRole;

#[derive(Subcommand)]
pub enum EvalCommand {
    /// Classify every record of a split under each selected configuration.
    Run(RunArgs),
    /// Score memes 0-9 with the teacher and keep label-consistent scores.
    Teacher(TeacherArgs),
    /// Write prompt/target files for externally fine-tuned configurations.
    Export(ExportArgs),
}

#[derive(Args)]
pub struct Common {
    /// Input manifest; repeat to concatenate (e.g. seen and unseen test sets).
    #[arg(long = "manifest", required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = memeguard_core::DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// `all`, or comma-separated `learning/strategy/label` patterns (`*` matches any part).
    #[arg(long, default_value = "all")]
    cells: String,
    #[arg(long)]
    backend: PathBuf,
    #[arg(long, default_value_t = memeguard_eval::DEFAULT_RESAMPLES)]
    resamples: usize,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long, default_value_t = 2)]
    retry_budget: u32,
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
pub struct TeacherArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    backend: PathBuf,
    #[arg(long, default_value = "category")]
    strategy: Strategy,
    #[arg(long, default_value = "train")]
    split: Split,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long, default_value_t = 2)]
    retry_budget: u32,
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "all")]
    cells: String,
    /// Share of train moved to validation when the manifest has no val split.
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Downsample train to equal class counts.
    #[arg(long)]
    balance: bool,
}

pub fn run(cmd: EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::Run(args) => matrix(args),
        EvalCommand::Teacher(args) => teacher(args),
        EvalCommand::Export(args) => export(args),
    }
}

fn matrix(args: RunArgs) -> Result<()> {
    let configs = filter_configs(&args.cells).map_err(anyhow::Error::msg)?;
    let out = &args.common.out;
    let input = crate::inputs::load_inputs(&args.common.manifests)?;
    let (config, gateway) = crate::inputs::gateway(&args.backend, args.cache.as_deref(), &out.join("cache"))?;
    let mut learnings: Vec<LearningType> = configs.iter().map(|c| c.learning).collect();
    learnings.dedup();
    let classifiers = Classifiers::from_config(&config, &learnings)?;
    let options = EvalOptions {
        seed: args.common.seed,
        resamples: args.resamples,
        retry_budget: args.retry_budget,
        workers: args.workers.max(1),
        split: args.split,
    };
    let runs = run_matrix(&gateway, &classifiers, &input, &configs, &options)?;
    write_outputs(out, &runs)?;
    let reports: Vec<_> = runs.iter().map(|r| r.report.clone()).collect();
    print!("{}", report_table(&reports));
    Ok(())
}

fn teacher(args: TeacherArgs) -> Result<()> {
    let out = &args.common.out;
    let input = crate::inputs::load_inputs(&args.common.manifests)?;
    let (config, gateway) = crate::inputs::gateway(&args.backend, args.cache.as_deref(), &out.join("cache"))?;
    let profile = config.profile(AgentRole::Teacher)?;
    let options = EvalOptions {
        seed: args.common.seed,
        workers: args.workers.max(1),
        retry_budget: args.retry_budget,
        split: args.split,
        ..EvalOptions::default()
    };
    let result = run_teacher(&gateway, &profile, &input, args.strategy, &options)?;

    // Self-contained copy of the input with the new scores attached.
    let images = ImageStore::open(out)?;
    let mut records = input.manifest.records.clone();
    for r in &mut records {
        let bytes = input.read_image(r)?;
        r.image_ref = images.put(&bytes, sniff_extension(&bytes))?;
    }
    let mut manifest = Manifest::new(records);
    let scored: std::collections::HashSet<&str> =
        result.outcome.annotated.iter().map(|s| s.meme_id.as_str()).collect();
    manifest.scaled_labels = input
        .manifest
        .scaled_labels
        .iter()
        .filter(|s| !scored.contains(s.meme_id.as_str()))
        .cloned()
        .chain(result.outcome.annotated.iter().cloned())
        .collect();
    let path = out.join("manifest.jsonl");
    manifest.save(&path).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "scored {} memes: {} consistent, {} discarded, {} unparseable",
        result.outcome.annotated.len(),
        result.outcome.kept.len(),
        result.outcome.annotated.len() - result.outcome.kept.len(),
        result.invalid.len()
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let configs = filter_configs(&args.cells).map_err(anyhow::Error::msg)?;
    let input = crate::inputs::load_inputs(&args.common.manifests)?;
    let options = ExportOptions {
        val_fraction: args.val_fraction,
        seed: args.common.seed,
        balance: args.balance,
    };
    let summary = export_training(&input, &configs, &options, &args.common.out)?;
    for (cell, counts) in &summary.cells {
        println!(
            "{cell}: {} train, {} val, {} skipped without score",
            counts.train, counts.val, counts.skipped_no_score
        );
    }
    Ok(())
}
