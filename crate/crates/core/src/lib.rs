//! Core library for capacitated vehicle routing with time windows and path
//! breaks: instance handling, a plan evaluator with an exact oracle, the
//! routing MDP, and an advisor-guided dueling double-DQN trainer.

pub mod advisor;
pub mod agent;
pub mod env;
pub mod fixtures;
pub mod instance;
pub mod milp;
pub mod qnet;
pub mod replay;
pub(crate) mod util;
