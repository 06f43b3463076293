//! Double Q-network agent.

mod agent;
mod network;
mod replay;

pub use agent::{
    act, episode_seed, greedy_policy, masked_argmax, td_target, train, train_step, train_with,
    Checkpoint, EpisodeRecord, TrainConfig, TrainOutcome,
};
pub use network::{sync_target, Gradients, QNetwork, Sample};
pub use replay::ReplayBuffer;
