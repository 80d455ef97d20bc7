use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use premsel::pipeline::{Overrides, Pipeline, PipelineConfig, PipelineError};

/// Premise-selection pipeline: parse a TPTP conjecture/axiom corpus, learn
/// functor embeddings from context distributions, and train dense relevance
/// classifiers on (conjecture, axiom) pairs.
#[derive(Parser)]
#[command(name = "premsel", version, about)]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Artifact directory (also via PREMSEL_WORK_DIR).
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,

    /// Zero out wall-clock fields so artifacts are byte-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Worker threads for the grid sweep.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cache the dataset from data.path or data.url.
    Fetch,
    /// Parse the dataset, build the vocabulary and signature vectors.
    Extract,
    /// Compute the per-functor context distributions.
    Context,
    /// Train the embedding model and cache all formula embeddings.
    Embed,
    /// Assemble, split and standardize labelled pair vectors.
    Pairs,
    /// Train the configured classifier specs.
    Train {
        /// Comma-separated specs, e.g. "64x64,512x128" (defaults to config).
        #[arg(long)]
        specs: Option<String>,
    },
    /// Evaluate trained classifiers on the test split.
    Eval {
        #[arg(long)]
        specs: Option<String>,
    },
    /// Train and evaluate all 15 grid cells (development protocol).
    Grid,
    /// Consolidate evaluation artifacts into one table.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut overrides = Overrides {
        seed: cli.seed,
        work_dir: cli.work_dir,
        deterministic: cli.deterministic,
        jobs: cli.jobs,
        specs: None,
    };
    if let Command::Train { specs } | Command::Eval { specs } = &cli.command {
        overrides.specs = specs.clone();
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    let pipeline = Pipeline::new(cfg)?;

    let outcome = match cli.command {
        Command::Fetch => pipeline.fetch()?,
        Command::Extract => pipeline.extract()?,
        Command::Context => pipeline.context()?,
        Command::Embed => pipeline.embed()?,
        Command::Pairs => pipeline.pairs()?,
        Command::Train { .. } => pipeline.train()?,
        Command::Eval { .. } => pipeline.eval()?,
        Command::Grid => pipeline.grid()?,
        Command::Report => {
            let outcome = pipeline.report()?;
            print!("{}", pipeline.render_report()?);
            outcome
        }
    };
    println!("{}", outcome.describe());
    Ok(())
}
