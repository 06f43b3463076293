//! Double Q-learning with experience replay.
//!
//! The local network picks actions (epsilon-greedy) and is fitted every
//! environment step; the target network evaluates the local network's
//! preferred next action and is refreshed by a hard copy every
//! `target_sync_every` episodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{sync_target, QNetwork, Sample};
use super::replay::ReplayBuffer;
use crate::env::{self, derive_seed, EpisodeContext, SensorConfigState, Transition};
use crate::error::{Error, Result};
use crate::problem::PlacementProblem;

/// Mixed into the run seed for the environment stream.
const ENV_STREAM: u64 = 0x656e_765f_7374_7265;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    /// Multiplicative decay applied after every episode.
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub target_sync_every: usize,
    pub episodes: usize,
    pub replay_capacity: usize,
    pub hidden: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_decay: 0.999,
            epsilon_min: 0.01,
            batch_size: 32,
            learning_rate: 1e-3,
            target_sync_every: 50,
            episodes: 5500,
            replay_capacity: 2000,
            hidden: 6,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        for (name, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_min", self.epsilon_min),
            ("epsilon_decay", self.epsilon_decay),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.epsilon_min > self.epsilon_start {
            return bad("epsilon_min exceeds epsilon_start".into());
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad(format!(
                "batch_size must be in 1..={} (replay capacity), got {}",
                self.replay_capacity, self.batch_size
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.target_sync_every == 0 {
            return bad("target_sync_every must be positive".into());
        }
        if self.hidden == 0 {
            return bad("hidden layer must have at least one unit".into());
        }
        Ok(())
    }

    /// Exploration rate used during episode `episode` (0-based).
    pub fn epsilon(&self, episode: usize) -> f64 {
        let e = self.epsilon_start * self.epsilon_decay.powi(episode.min(i32::MAX as usize) as i32);
        e.max(self.epsilon_min)
    }
}

/// Index of the largest `q` among `valid`, lowest index on ties.
pub fn masked_argmax(q: &[f64], valid: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &a in valid {
        match best {
            Some(b) if q[a] > q[b] || (q[a] == q[b] && a < b) => best = Some(a),
            None => best = Some(a),
            _ => {}
        }
    }
    best
}

/// Epsilon-greedy action among `valid`.
pub fn act<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &[f64],
    valid: &[usize],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if valid.is_empty() {
        return Err(Error::TerminalState);
    }
    if rng.random::<f64>() < epsilon {
        return Ok(valid[rng.random_range(0..valid.len())]);
    }
    let q = net.forward(state)?;
    Ok(masked_argmax(&q, valid).expect("valid is non-empty"))
}

/// Double-Q regression target of one transition.
pub fn td_target(target: &QNetwork, local: &QNetwork, tr: &Transition, gamma: f64) -> Result<f64> {
    if tr.done || gamma == 0.0 {
        return Ok(tr.reward);
    }
    let next = tr.next_state.as_input();
    let valid = env::valid_actions(&tr.next_state)?;
    let q_local = local.forward(&next)?;
    let best = masked_argmax(&q_local, &valid).ok_or(Error::TerminalState)?;
    Ok(tr.reward + gamma * target.forward(&next)?[best])
}

/// One SGD step of `local` on `batch`; returns the pre-update loss.
pub fn train_step(
    local: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    config: &TrainConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Shape("empty training batch".into()));
    }
    let inputs: Vec<Vec<f64>> = batch.iter().map(|t| t.state.as_input()).collect();
    let targets = batch
        .iter()
        .map(|t| td_target(target, local, t, config.gamma))
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<Sample<'_>> = batch
        .iter()
        .zip(&inputs)
        .zip(&targets)
        .map(|((t, s), &y)| Sample {
            state: s,
            action: t.action,
            target: y,
        })
        .collect();
    let (loss, grad) = local.loss_and_gradients(&samples)?;
    if !loss.is_finite() {
        return Err(Error::DivergedTraining(format!("loss became {loss}")));
    }
    local.apply_sgd(&grad, config.learning_rate);
    if !local.is_finite() {
        return Err(Error::DivergedTraining("non-finite network weights".into()));
    }
    Ok(loss)
}

/// Summary of one training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub total_reward: f64,
    pub epsilon: f64,
    /// Mean loss of the gradient steps taken in the episode, if any.
    pub loss_mean: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: QNetwork,
    pub history: Vec<EpisodeRecord>,
}

impl TrainOutcome {
    pub fn total_rewards(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.total_reward).collect()
    }
}

/// Seed of the environment draw for `episode` of a run seeded with `seed`.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(seed ^ ENV_STREAM, episode as u64)
}

pub fn train(problem: &PlacementProblem, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut history = Vec::new();
    let network = train_with(problem, config, 1, |rec| history.push(rec.clone()))?;
    Ok(TrainOutcome { network, history })
}

/// Training loop reporting each finished episode to `on_episode`.
///
/// Episode contexts only depend on the run seed and the episode index, so
/// they are computed `threads` at a time and consumed in order; the result
/// does not depend on `threads`.
pub fn train_with<F: FnMut(&EpisodeRecord)>(
    problem: &PlacementProblem,
    config: &TrainConfig,
    threads: usize,
    mut on_episode: F,
) -> Result<QNetwork> {
    config.validate()?;
    let n = problem.n_channels();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut local = QNetwork::new(n, config.hidden, n, &mut rng);
    let mut target = local.clone();
    let mut memory = ReplayBuffer::new(config.replay_capacity);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let chunk = if threads > 1 { 16 * threads } else { 1 };

    let mut episode = 0;
    while episode < config.episodes {
        let end = (episode + chunk).min(config.episodes);
        let contexts: Vec<Result<EpisodeContext>> = if threads > 1 {
            pool.install(|| {
                (episode..end)
                    .into_par_iter()
                    .map(|e| env::sample_context(problem, episode_seed(config.rng_seed, e)))
                    .collect()
            })
        } else {
            (episode..end)
                .map(|e| env::sample_context(problem, episode_seed(config.rng_seed, e)))
                .collect()
        };

        for ctx in contexts {
            let ctx = ctx?;
            let epsilon = config.epsilon(episode);
            let mut state = SensorConfigState::empty(n, problem.budget());
            let mut actions = Vec::with_capacity(problem.budget());
            let mut rewards = Vec::with_capacity(problem.budget());
            let mut losses = Vec::new();
            while !state.is_terminal() {
                let valid = env::valid_actions(&state)?;
                let action = act(&local, &state.as_input(), &valid, epsilon, &mut rng)?;
                let tr = env::step(&state, &ctx, action)?;
                actions.push(action);
                rewards.push(tr.reward);
                state = tr.next_state.clone();
                memory.push(tr);
                if let Some(batch) = memory.sample(config.batch_size, &mut rng) {
                    losses.push(train_step(&mut local, &target, &batch, config)?);
                }
            }
            if (episode + 1) % config.target_sync_every == 0 {
                sync_target(&local, &mut target)?;
            }
            let loss_mean =
                (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64);
            on_episode(&EpisodeRecord {
                episode,
                total_reward: rewards.iter().sum(),
                actions,
                rewards,
                epsilon,
                loss_mean,
            });
            episode += 1;
        }
    }
    Ok(local)
}

/// Greedy roll-out from the empty configuration.
pub fn greedy_policy(net: &QNetwork, problem: &PlacementProblem) -> Result<Vec<usize>> {
    let mut state = SensorConfigState::empty(problem.n_channels(), problem.budget());
    let mut chosen = Vec::with_capacity(problem.budget());
    while !state.is_terminal() {
        let valid = env::valid_actions(&state)?;
        let q = net.forward(&state.as_input())?;
        let a = masked_argmax(&q, &valid).ok_or(Error::TerminalState)?;
        state = SensorConfigState::from_channels(problem.n_channels(), problem.budget(), &{
            let mut placed = state.placed();
            placed.push(a);
            placed
        })?;
        chosen.push(a);
    }
    Ok(chosen)
}

/// Serialized network together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub network: QNetwork,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
