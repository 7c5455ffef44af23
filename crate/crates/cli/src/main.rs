//! `sectionrec`: staged pipeline for section recommendation.

mod config;
mod error;
mod stages;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::stages::{L2rSource, RecommendRequest, Run, TrainTarget};

#[derive(Parser)]
#[command(name = "sectionrec", version, about = "Recommend section titles for articles from similar articles")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus at the configured input paths.
    Synth,
    /// Load, filter and split the corpus.
    Ingest,
    /// Break cycles and prune impure categories.
    PruneGraph,
    /// Train one model.
    Train {
        #[arg(value_enum)]
        target: TrainTarget,
        /// Per-category rankings the merge model is fit on (l2r only).
        #[arg(long, value_enum, default_value = "counts")]
        source: L2rSource,
    },
    /// Print `rank<TAB>section<TAB>score` lines for an article or a category.
    Recommend {
        #[arg(long, conflicts_with = "category_id", required_unless_present = "category_id")]
        article_id: Option<u64>,
        #[arg(long)]
        category_id: Option<u64>,
        #[arg(long, default_value = "counts")]
        method: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Keep sections the article already has.
        #[arg(long)]
        include_existing: bool,
    },
    /// Score methods on the test split and write reports.
    Evaluate {
        #[arg(long, value_delimiter = ',', default_value = "counts,random")]
        methods: Vec<String>,
        #[arg(long)]
        kmax: Option<usize>,
    },
    /// Fraction of categories able to produce at least x recommendations.
    Coverage {
        #[arg(long, default_value_t = 20)]
        x_max: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    config.validate()?;
    let run = Run {
        fingerprint: config.fingerprint(),
        config,
    };
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Synth => run.synth(),
        Command::Ingest => run.ingest(),
        Command::PruneGraph => run.prune_graph(),
        Command::Train { target, source } => run.train(target, source),
        Command::Recommend {
            article_id,
            category_id,
            method,
            k,
            include_existing,
        } => run.recommend(
            &RecommendRequest {
                article: article_id,
                category: category_id,
                method,
                k,
                include_existing,
            },
            &mut out,
        ),
        Command::Evaluate { methods, kmax } => run.evaluate(&methods, kmax, &mut out),
        Command::Coverage { x_max } => run.coverage(x_max, &mut out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
