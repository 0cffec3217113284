mod annotate_cmd;
mod augment_cmd;
mod eval_cmd;
mod inputs;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "memeguard", version, about = "Counterfactual augmentation and evaluation for hateful-meme datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate non-hateful counterfactuals of hateful memes.
    #[command(subcommand)]
    Augment(augment_cmd::AugmentCommand),
    /// Run the classification matrix, teacher labelling or training export.
    #[command(subcommand)]
    Eval(eval_cmd::EvalCommand),
    /// Human annotation tasks: sample, serve, summarize.
    #[command(subcommand)]
    Annotate(annotate_cmd::AnnotateCommand),
    /// Validate manifests and print their composition.
    Check {
        #[arg(long = "manifest", required = true)]
        manifests: Vec<std::path::PathBuf>,
    },
    /// Print the composed prompt of one cell, e.g. `multimodal_prompt/category/scale`.
    Prompt { cell: String },
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Augment(cmd) => augment_cmd::run(cmd),
        Command::Eval(cmd) => eval_cmd::run(cmd),
        Command::Annotate(cmd) => annotate_cmd::run(cmd),
        Command::Check { manifests } => inputs::check(&manifests),
        Command::Prompt { cell } => inputs::show_prompt(&cell),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
