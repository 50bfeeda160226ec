use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dacs::selection::Strategy;
use dacs_cli::commands::{self, DensityArgs, DensityMode, MetricArg, SelectArgs, SimulateArgs};
use dacs_cli::embedding::Format;

#[derive(Parser)]
#[command(name = "dacs", version, about = "Density-aware core-set selection for active learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pick the next batch to label from an embedding file.
    Select {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Binary)]
        format: Format,
        /// Newline-separated indices of already-labeled samples.
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        budget: usize,
        /// random, coreset, dacs, sparse-only, dense-only, entropy or combined.
        #[arg(long)]
        strategy: Strategy,
        /// Newline-separated uncertainty scores; needed by entropy and combined.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// key = value file; only acquisition keys and `seed` are used here.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-sample density as CSV.
    Density {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Binary)]
        format: Format,
        #[arg(long, value_enum)]
        mode: DensityMode,
        #[arg(long, default_value_t = 20)]
        knn: usize,
        #[arg(long, default_value_t = 100)]
        buckets: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Auto)]
        metric: MetricArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also compute the other mode and print their Spearman correlation.
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a strategies x seeds grid of simulated active-learning loops.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Select {
            embeddings,
            format,
            labeled,
            budget,
            strategy,
            scores,
            config,
            out,
        } => commands::cmd_select(&SelectArgs {
            embeddings,
            format,
            labeled,
            budget,
            strategy,
            scores,
            config,
            out,
        }),
        Command::Density {
            embeddings,
            format,
            mode,
            knn,
            buckets,
            metric,
            seed,
            compare,
            out,
        } => commands::cmd_density(&DensityArgs {
            embeddings,
            format,
            mode,
            knn,
            buckets,
            metric,
            seed,
            compare,
            out,
        }),
        Command::Simulate { config, out } => commands::cmd_simulate(&SimulateArgs { config, out }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
