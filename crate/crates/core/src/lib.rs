//! Information-driven placement of heterogeneous sensors on a linear shear
//! building, learned with a double Q-network and checked against Monte
//! Carlo and greedy oracles.

pub mod building;
pub mod config;
pub mod dqn;
pub mod env;
pub mod error;
pub mod ground_motion;
pub mod info;
pub mod oracle;
pub mod problem;
pub mod runner;

pub use error::{Error, Result};
pub use problem::{ParameterPrior, PlacementProblem, SensorType};
