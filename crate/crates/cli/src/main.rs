mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliResult;

const OVERRIDES_HELP: &str = "\
Any configuration key can be set on the command line as `--section.key value`
(or `--section.key=value`), e.g. `--model.embed_dim 32 --eval.methods tabsim,jaccard`.
Overrides are applied after the config file.

Exit codes: 0 success, 2 configuration or usage error, 3 data error,
4 internal error.";

#[derive(Parser)]
#[command(name = "tablesim", version, about = "Semantic table similarity: training, scoring and evaluation", after_help = OVERRIDES_HELP)]
struct Cli {
    /// Sectioned key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice (same as `run.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (same as `run.out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the corpus pairs; writes model.ckpt and loss.tsv.
    Train,
    /// Print the distance of two corpus tables and the resulting label.
    Score {
        /// Defaults to <out>/model.ckpt.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        first: String,
        second: String,
    },
    /// Rank all other corpus tables by distance to a query table.
    Rank {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Print only the first N tables.
        #[arg(long)]
        top: Option<usize>,
        query: String,
    },
    /// Cross-validate the configured methods; writes eval.json,
    /// report-<method>.json, error_overlap.json and summary.tsv.
    Eval {
        /// Evaluate folds in parallel.
        #[arg(long)]
        parallel_eval: bool,
    },
    /// Generate a synthetic labeled corpus as corpus.json.
    GenSynthetic {
        /// Also write matching word vectors as vectors.txt.
        #[arg(long)]
        vectors: bool,
    },
    /// Build an embedding file (embeddings.txt) for the corpus vocabulary
    /// with the strategy in `embeddings.strategy`.
    TrainEmbeddings,
}

fn run(args: Vec<String>) -> CliResult<()> {
    let (rest, mut overrides) = config::extract_overrides(args)?;
    let cli = Cli::try_parse_from(rest).unwrap_or_else(|e| e.exit());
    // the dedicated flags win over dotted overrides of the same key
    if let Some(seed) = cli.seed {
        overrides.push(("run.seed".into(), seed.to_string()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("run.out".into(), format!("{:?}", out.display().to_string())));
    }
    let cfg = config::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Score {
            checkpoint,
            first,
            second,
        } => commands::score(&cfg, checkpoint, &first, &second),
        Command::Rank { checkpoint, top, query } => commands::rank(&cfg, checkpoint, &query, top),
        Command::Eval { parallel_eval } => commands::eval(&cfg, parallel_eval),
        Command::GenSynthetic { vectors } => commands::gen_synthetic(&cfg, vectors),
        Command::TrainEmbeddings => commands::train_embeddings(&cfg),
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tablesim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
