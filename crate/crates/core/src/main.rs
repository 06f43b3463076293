use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};

use senseplace::config::RunConfig;
use senseplace::runner::{self, ExitCode, RunOptions};
use senseplace::Error;

#[derive(Parser)]
#[command(name = "senseplace", version, about = "Learn informative sensor configurations for a shear building")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the configured random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for episode and sample evaluation
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train the agent and write history, checkpoint and policy report
    Train {
        #[command(flatten)]
        common: Common,
        /// Output directory (defaults to the configured output_dir)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Also write per-step episode traces
        #[arg(long)]
        trace: bool,
    },
    /// Monte Carlo channel scores, top-m and greedy full-Fisher selections
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one ground-motion record as CSV
    GmSample {
        #[command(flatten)]
        common: Common,
        /// Output CSV file
        #[arg(long, default_value = "ground_motion.csv")]
        out: PathBuf,
    },
    /// Write the normalized gain matrix of one sampled episode as CSV
    GainSample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "gain_matrix.csv")]
        out: PathBuf,
    },
    /// Check a configuration and print a summary
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn options(common: &Common, out: Option<PathBuf>, episodes: Option<usize>, trace: bool) -> RunOptions {
    RunOptions {
        seed: common.seed,
        out,
        episodes,
        threads: common.threads,
        trace,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train { common, out, episodes, trace } => {
            let summary = runner::run_train(&common.config, &options(&common, out, episodes, trace))?;
            println!("trained {} episodes -> {}", summary.history.len(), summary.out_dir.display());
            println!("policy: {}", summary.policy_labels.join(", "));
        }
        Command::Oracle { common, out } => {
            let summary = runner::run_oracle(&common.config, &options(&common, out, None, false))?;
            println!("oracle scores -> {}", summary.out_dir.display());
        }
        Command::GmSample { common, out } => {
            let record = runner::run_gm_sample(&common.config, &options(&common, None, None, false), &out)?;
            println!("{} samples -> {}", record.len(), out.display());
        }
        Command::GainSample { common, out } => {
            runner::run_gain_sample(&common.config, &options(&common, None, None, false), &out)?;
            println!("gain matrix -> {}", out.display());
        }
        Command::ValidateConfig { common } => {
            let mut cfg = RunConfig::load(&common.config)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            print!("{}", runner::describe(&cfg)?);
            println!("ok");
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        process::exit(ExitCode::from(&e) as i32);
    }
}
