//! Sensor-placement decision process.
//!
//! A state is the 0/1 occupancy vector over all channels. Each step places
//! one sensor on a free channel; an episode ends after `budget` placements.
//! Transitions are deterministic. Rewards come from a gain matrix that is
//! drawn fresh (parameters and ground motion) at every reset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ground_motion;
use crate::info::{gain_matrix, reward_of_action, GainMatrix};
use crate::problem::PlacementProblem;

/// Action index of sensor type `type_index` (position in the problem's type
/// list) at 1-based `story`.
pub fn channel_index(type_index: usize, story: usize, n_story: usize, n_types: usize) -> Result<usize> {
    if type_index >= n_types {
        return Err(Error::InvalidChannel(format!(
            "sensor type {type_index} outside 0..{n_types}"
        )));
    }
    if story == 0 || story > n_story {
        return Err(Error::InvalidChannel(format!("story {story} outside 1..={n_story}")));
    }
    Ok(type_index * n_story + (story - 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SensorConfigState {
    occupancy: Vec<bool>,
    step_count: usize,
    budget: usize,
}

impl SensorConfigState {
    pub fn empty(n_channels: usize, budget: usize) -> Self {
        Self {
            occupancy: vec![false; n_channels],
            step_count: 0,
            budget,
        }
    }

    /// State with the given channels occupied.
    pub fn from_channels(n_channels: usize, budget: usize, channels: &[usize]) -> Result<Self> {
        let mut s = Self::empty(n_channels, budget);
        for &c in channels {
            s = s.place(c)?;
        }
        Ok(s)
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn n_channels(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_terminal(&self) -> bool {
        self.step_count >= self.budget
    }

    pub fn is_occupied(&self, channel: usize) -> bool {
        self.occupancy.get(channel).copied().unwrap_or(false)
    }

    /// Occupied channels in ascending order.
    pub fn placed(&self) -> Vec<usize> {
        (0..self.occupancy.len()).filter(|&i| self.occupancy[i]).collect()
    }

    /// Network input: 1.0 for occupied channels, 0.0 otherwise.
    pub fn as_input(&self) -> Vec<f64> {
        self.occupancy.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect()
    }

    fn place(&self, action: usize) -> Result<Self> {
        if self.is_terminal() {
            return Err(Error::TerminalState);
        }
        if action >= self.occupancy.len() {
            return Err(Error::InvalidAction {
                action,
                reason: format!("only {} channels exist", self.occupancy.len()),
            });
        }
        if self.occupancy[action] {
            return Err(Error::InvalidAction {
                action,
                reason: "channel already has a sensor".into(),
            });
        }
        let mut next = self.clone();
        next.occupancy[action] = true;
        next.step_count += 1;
        Ok(next)
    }
}

/// Per-episode random draw. Immutable once created.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeContext {
    pub theta_sample: Vec<f64>,
    pub excitation: Vec<f64>,
    pub gain: GainMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: SensorConfigState,
    pub action: usize,
    pub next_state: SensorConfigState,
    pub reward: f64,
    pub done: bool,
}

/// Seed of episode or sample `index` derived from a run seed (SplitMix64).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Parameter sample and ground-motion record for one episode.
pub fn sample_inputs(problem: &PlacementProblem, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = problem.prior().sample(&mut rng);
    let motion_seed: u64 = rng.random();
    let excitation = ground_motion::generate(problem.excitation(), motion_seed)?;
    Ok((theta, excitation))
}

pub fn sample_context(problem: &PlacementProblem, seed: u64) -> Result<EpisodeContext> {
    let (theta_sample, excitation) = sample_inputs(problem, seed)?;
    let gain = gain_matrix(problem, &theta_sample, &excitation)?;
    Ok(EpisodeContext {
        theta_sample,
        excitation,
        gain,
    })
}

pub fn reset(problem: &PlacementProblem, seed: u64) -> Result<(SensorConfigState, EpisodeContext)> {
    let ctx = sample_context(problem, seed)?;
    Ok((SensorConfigState::empty(problem.n_channels(), problem.budget()), ctx))
}

/// Free channels of a non-terminal state.
pub fn valid_actions(state: &SensorConfigState) -> Result<Vec<usize>> {
    if state.is_terminal() {
        return Err(Error::TerminalState);
    }
    Ok((0..state.n_channels()).filter(|&i| !state.occupancy[i]).collect())
}

pub fn step(state: &SensorConfigState, ctx: &EpisodeContext, action: usize) -> Result<Transition> {
    let next_state = state.place(action)?;
    let reward = reward_of_action(&ctx.gain, action)?;
    let done = next_state.is_terminal();
    Ok(Transition {
        state: state.clone(),
        action,
        next_state,
        reward,
        done,
    })
}
