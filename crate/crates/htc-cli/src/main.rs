//! `htc` — hierarchical text classification harness over chat-completion
//! models: run experiments, re-score stored predictions, report token
//! costs, and probe for dataset contamination.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use htc_cli::commands::{self, Outcome};
use htc_core::cost::PriceTable;
use htc_core::Strategy;

#[derive(Parser)]
#[command(
    name = "htc",
    about = "Hierarchical text classification with prompting strategies (DL, DH, TMH)",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured (strategy, k) cell and write predictions,
    /// metrics and cost artifacts. Flags override config-file values.
    Run {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Render and count prompts without issuing any request.
        #[arg(long)]
        dry_run: bool,
        /// Override run.output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override run.strategies, e.g. --strategies DL,TMH.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<Strategy>>,
        /// Override run.k_shot, e.g. --k-shot 0,1,5.
        #[arg(long, value_delimiter = ',')]
        k_shot: Option<Vec<usize>>,
        /// Override run.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override run.concurrency.
        #[arg(long)]
        concurrency: Option<usize>,
        /// Override backend.kind: http, mock-echo or mock-scripted.
        #[arg(long)]
        backend: Option<htc_cli::config::BackendKindConfig>,
        /// Override model.name.
        #[arg(long)]
        model: Option<String>,
    },
    /// Recompute metrics from a stored predictions file by re-running
    /// normalization and resolution on the raw completions.
    Score {
        /// Experiment config (TOML); provides the dataset and taxonomy.
        #[arg(long)]
        config: PathBuf,
        /// predictions.jsonl produced by `run`.
        #[arg(long)]
        predictions: PathBuf,
        /// Write the recomputed metrics JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate token usage from a stored predictions file into a cost
    /// report.
    CostReport {
        /// predictions.jsonl produced by `run`.
        #[arg(long)]
        predictions: PathBuf,
        /// Input price per million tokens, e.g. 0.15.
        #[arg(long)]
        input_price: Option<String>,
        /// Output price per million tokens, e.g. 0.60.
        #[arg(long)]
        output_price: Option<String>,
        /// Currency label for the report.
        #[arg(long, default_value = "USD")]
        currency: String,
        /// Write the cost JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the dataset-regeneration contamination battery described by
    /// a spec file and write a JSON report.
    ContaminationCheck {
        /// Contamination spec (TOML).
        #[arg(long)]
        spec: PathBuf,
    },
    /// Render a single prompt to stdout without any request.
    Render {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// DL, DH or TMH.
        #[arg(long)]
        strategy: Strategy,
        /// Few-shot example count.
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Literal passage text to classify.
        #[arg(long, conflicts_with = "doc")]
        text: Option<String>,
        /// Index of a test document to use as the passage.
        #[arg(long)]
        doc: Option<usize>,
        /// TMH step depth.
        #[arg(long, default_value_t = 1)]
        depth: u32,
        /// TMH parent as a ` > `-joined path, e.g. "Computer Science".
        #[arg(long)]
        parent: Option<String>,
    },
}

fn dispatch(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Run {
            config,
            dry_run,
            output_dir,
            strategies,
            k_shot,
            seed,
            concurrency,
            backend,
            model,
        } => {
            let overrides = commands::RunOverrides {
                output_dir,
                strategies,
                k_shot,
                seed,
                concurrency,
                backend,
                model,
            };
            commands::cmd_run(&config, dry_run, &overrides)
        }
        Command::Score { config, predictions, out } => {
            commands::cmd_score(&config, &predictions, out.as_deref())
        }
        Command::CostReport { predictions, input_price, output_price, currency, out } => {
            let prices = match (input_price, output_price) {
                (None, None) => None,
                (input, output) => Some(PriceTable {
                    input_per_million: input
                        .as_deref()
                        .unwrap_or("0")
                        .parse()
                        .map_err(|e| anyhow::anyhow!("invalid --input-price: {e}"))?,
                    output_per_million: output
                        .as_deref()
                        .unwrap_or("0")
                        .parse()
                        .map_err(|e| anyhow::anyhow!("invalid --output-price: {e}"))?,
                    currency,
                }),
            };
            commands::cmd_cost_report(&predictions, prices, out.as_deref())
        }
        Command::ContaminationCheck { spec } => commands::cmd_contamination(&spec),
        Command::Render { config, strategy, k, text, doc, depth, parent } => commands::cmd_render(
            &config,
            strategy,
            k,
            text.as_deref(),
            doc,
            depth,
            parent.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::outcome_of(&err).code())
        }
    }
}
