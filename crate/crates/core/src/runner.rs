//! Batch runs behind the command-line subcommands. Every run writes plain
//! files into an output directory; nothing in them depends on wall-clock
//! time or paths, so identical inputs give byte-identical artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::building::{assemble_matrices, modal_properties};
use crate::config::RunConfig;
use crate::dqn::{self, Checkpoint, EpisodeRecord, TrainConfig};
use crate::env::{derive_seed, sample_context};
use crate::error::{Error, Result};
use crate::ground_motion;
use crate::oracle::{self, ChannelScoreTable, GreedySelection};
use crate::problem::PlacementProblem;

pub const REWARD_HISTORY: &str = "reward_history.csv";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const POLICY_REPORT: &str = "policy_report.json";
pub const RUN_METADATA: &str = "run_metadata.json";
pub const EPISODE_TRACE: &str = "episode_trace.csv";
pub const ORACLE_SCORES: &str = "oracle_scores.csv";
pub const ORACLE_POLICY: &str = "oracle_policy.json";

/// Command-line overrides shared by the subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub episodes: Option<usize>,
    pub threads: usize,
    /// Also write per-step episode traces.
    pub trace: bool,
}

impl RunOptions {
    fn threads(&self) -> usize {
        self.threads.max(1)
    }

    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(episodes) = self.episodes {
            cfg.train.episodes = Some(episodes);
        }
        cfg.validate()
    }

    fn output_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs/latest"))
    }
}

pub fn load_config(path: &Path, opts: &RunOptions) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    opts.apply(&mut cfg)?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct ModeSummary {
    period_s: f64,
    damping_ratio: f64,
}

#[derive(Debug, Serialize)]
struct RunMetadata<'a> {
    version: &'a str,
    command: &'a str,
    threads: usize,
    config: &'a RunConfig,
    train: &'a TrainConfig,
    story_mass_kg: Vec<f64>,
    channels: Vec<String>,
    modes: Vec<ModeSummary>,
}

fn write_metadata(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    problem: &PlacementProblem,
    threads: usize,
) -> Result<()> {
    let modes = modal_properties(&assemble_matrices(problem.building())?)
        .into_iter()
        .map(|m| ModeSummary {
            period_s: m.period(),
            damping_ratio: m.damping_ratio,
        })
        .collect();
    let meta = RunMetadata {
        version: env!("CARGO_PKG_VERSION"),
        command,
        threads,
        config: cfg,
        train: &cfg.train_config(),
        story_mass_kg: problem.building().mass.clone(),
        channels: (0..problem.n_channels()).map(|c| problem.channel_label(c)).collect(),
        modes,
    };
    fs::write(dir.join(RUN_METADATA), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

fn history_row(rec: &EpisodeRecord) -> String {
    let loss = rec.loss_mean.map(|l| l.to_string()).unwrap_or_default();
    format!("{},{},{},{}\n", rec.episode, rec.total_reward, rec.epsilon, loss)
}

#[derive(Debug, Serialize)]
struct ChannelRank {
    channel: usize,
    label: String,
    oracle_rank: usize,
    oracle_mean_reward: f64,
}

#[derive(Debug, Serialize)]
struct PolicyReport {
    policy: Vec<ChannelRank>,
    oracle_top_m: Vec<String>,
    oracle_samples: usize,
    policy_expected_return: f64,
    oracle_expected_return: f64,
}

/// Result of [`run_train`].
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub policy: Vec<usize>,
    pub policy_labels: Vec<String>,
    pub history: Vec<EpisodeRecord>,
}

/// Trains an agent and writes the reward history, checkpoint, policy report
/// and run metadata. History rows are written as episodes finish, so a
/// diverged run leaves the episodes completed so far on disk.
pub fn run_train(config_path: &Path, opts: &RunOptions) -> Result<TrainSummary> {
    let cfg = load_config(config_path, opts)?;
    let problem = cfg.problem()?;
    let train_cfg = cfg.train_config();
    let dir = opts.output_dir(&cfg);
    fs::create_dir_all(&dir)?;
    write_metadata(&dir, "train", &cfg, &problem, opts.threads())?;

    let mut history_out = BufWriter::new(File::create(dir.join(REWARD_HISTORY))?);
    history_out.write_all(b"episode,total_reward,epsilon,loss_mean\n")?;
    let mut trace_out = match opts.trace {
        true => {
            let mut w = BufWriter::new(File::create(dir.join(EPISODE_TRACE))?);
            w.write_all(b"episode,step,action_label,reward\n")?;
            Some(w)
        }
        false => None,
    };

    let mut history = Vec::with_capacity(train_cfg.episodes);
    let mut io_error: Option<std::io::Error> = None;
    let trained = dqn::train_with(&problem, &train_cfg, opts.threads(), |rec| {
        let mut write = || -> std::io::Result<()> {
            history_out.write_all(history_row(rec).as_bytes())?;
            if let Some(w) = trace_out.as_mut() {
                for (step, (a, r)) in rec.actions.iter().zip(&rec.rewards).enumerate() {
                    writeln!(w, "{},{},{},{}", rec.episode, step + 1, problem.channel_label(*a), r)?;
                }
            }
            Ok(())
        };
        if let Err(e) = write() {
            io_error.get_or_insert(e);
        }
        history.push(rec.clone());
    });
    history_out.flush()?;
    if let Some(w) = trace_out.as_mut() {
        w.flush()?;
    }
    if let Some(e) = io_error {
        return Err(e.into());
    }
    let network = trained?;

    let checkpoint = Checkpoint {
        network,
        config: train_cfg,
    };
    fs::write(dir.join(CHECKPOINT), checkpoint.to_json()?)?;

    let policy = dqn::greedy_policy(&checkpoint.network, &problem)?;
    let gains = oracle::sample_gains(&problem, cfg.oracle.n_samples, oracle_seed(&cfg), opts.threads())?;
    let table = ChannelScoreTable::from_gains(&gains)?;
    let ranks = table.ranks();
    let top = oracle::top_m_configuration(&table, problem.budget());
    let report = PolicyReport {
        policy: policy
            .iter()
            .map(|&c| ChannelRank {
                channel: c,
                label: problem.channel_label(c),
                oracle_rank: ranks[c],
                oracle_mean_reward: table.mean[c],
            })
            .collect(),
        oracle_top_m: top.iter().map(|&c| problem.channel_label(c)).collect(),
        oracle_samples: table.n_samples,
        policy_expected_return: oracle::expected_config_reward(&gains, &policy),
        oracle_expected_return: oracle::expected_config_reward(&gains, &top),
    };
    fs::write(dir.join(POLICY_REPORT), serde_json::to_string_pretty(&report)? + "\n")?;

    Ok(TrainSummary {
        out_dir: dir,
        policy_labels: policy.iter().map(|&c| problem.channel_label(c)).collect(),
        policy,
        history,
    })
}

/// Oracle samples use their own stream so they never coincide with training episodes.
fn oracle_seed(cfg: &RunConfig) -> u64 {
    derive_seed(cfg.seed, 0x6f72_6163_6c65)
}

#[derive(Debug, Serialize)]
struct OraclePolicy {
    n_samples: usize,
    budget: usize,
    top_m: Vec<String>,
    top_m_expected_return: f64,
    greedy_full_fisher: Vec<String>,
    greedy_marginal_gains_nats: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OracleSummary {
    pub out_dir: PathBuf,
    pub table: ChannelScoreTable,
    pub top_m: Vec<usize>,
    pub greedy: GreedySelection,
}

/// Writes the per-channel score table and the oracle selections.
pub fn run_oracle(config_path: &Path, opts: &RunOptions) -> Result<OracleSummary> {
    let cfg = load_config(config_path, opts)?;
    let problem = cfg.problem()?;
    let dir = opts.output_dir(&cfg);
    fs::create_dir_all(&dir)?;
    write_metadata(&dir, "oracle", &cfg, &problem, opts.threads())?;

    let n = cfg.oracle.n_samples;
    let seed = oracle_seed(&cfg);
    let gains = oracle::sample_gains(&problem, n, seed, opts.threads())?;
    let table = ChannelScoreTable::from_gains(&gains)?;
    let mut csv = String::from("channel_label,mean,stderr\n");
    for c in 0..problem.n_channels() {
        csv.push_str(&format!("{},{},{}\n", problem.channel_label(c), table.mean[c], table.stderr[c]));
    }
    fs::write(dir.join(ORACLE_SCORES), csv)?;

    let top_m = oracle::top_m_configuration(&table, problem.budget());
    let greedy =
        oracle::greedy_full_fisher_with_threads(&problem, problem.budget(), n, seed, opts.threads())?;
    let policy = OraclePolicy {
        n_samples: n,
        budget: problem.budget(),
        top_m: top_m.iter().map(|&c| problem.channel_label(c)).collect(),
        top_m_expected_return: oracle::expected_config_reward(&gains, &top_m),
        greedy_full_fisher: greedy.channels.iter().map(|&c| problem.channel_label(c)).collect(),
        greedy_marginal_gains_nats: greedy.marginal_gains.clone(),
    };
    fs::write(dir.join(ORACLE_POLICY), serde_json::to_string_pretty(&policy)? + "\n")?;
    Ok(OracleSummary {
        out_dir: dir,
        table,
        top_m,
        greedy,
    })
}

/// Writes one ground-motion record as `time_s,accel_mps2`.
pub fn run_gm_sample(config_path: &Path, opts: &RunOptions, out: &Path) -> Result<Vec<f64>> {
    let cfg = load_config(config_path, opts)?;
    let params = cfg.excitation_params();
    let record = ground_motion::generate(&params, cfg.seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut csv = String::from("time_s,accel_mps2\n");
    for (i, a) in record.iter().enumerate() {
        let t = (i as f64 * params.dt * 1e9).round() / 1e9;
        csv.push_str(&format!("{t},{a}\n"));
    }
    fs::write(out, csv)?;
    Ok(record)
}

/// Writes the normalized gain matrix of one sampled episode, one row per
/// channel and one column per parameter.
pub fn run_gain_sample(config_path: &Path, opts: &RunOptions, out: &Path) -> Result<()> {
    let cfg = load_config(config_path, opts)?;
    let problem = cfg.problem()?;
    let ctx = sample_context(&problem, cfg.seed)?;
    let n = problem.n_story();
    let mut csv = String::from("channel");
    for name in ["k", "c"] {
        for s in 1..=n {
            csv.push_str(&format!(",{name}{s}"));
        }
    }
    csv.push('\n');
    for c in 0..problem.n_channels() {
        csv.push_str(&problem.channel_label(c));
        for v in ctx.gain.g.row(c).iter() {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, csv)?;
    Ok(())
}

/// Human-readable summary of a valid configuration.
pub fn describe(cfg: &RunConfig) -> Result<String> {
    let problem = cfg.problem()?;
    let modes = modal_properties(&assemble_matrices(problem.building())?);
    let mut s = format!(
        "{} stories, {} sensor types, {} channels, budget {}\n",
        problem.n_story(),
        problem.sensors().len(),
        problem.n_channels(),
        problem.budget()
    );
    s.push_str(&format!("story mass: {:.1} kg\n", problem.building().mass[0]));
    if let Some(m) = modes.first() {
        s.push_str(&format!(
            "fundamental mode: T = {:.4} s, damping {:.2}%\n",
            m.period(),
            100.0 * m.damping_ratio
        ));
    }
    s.push_str(&format!("episodes: {}\n", cfg.train_config().episodes));
    Ok(s)
}

impl From<&Error> for ExitCode {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => ExitCode::Config,
            _ => ExitCode::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Config = 2,
    Runtime = 3,
}
