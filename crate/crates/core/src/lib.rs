//! Latent bandit simulation: known per-state reward models, a hidden Markov
//! latent state, belief filtering, information-gathering Thompson sampling
//! (AGEmTS), baselines, environments, dataset-derived reward models and an
//! experiment harness.

pub mod belief;
pub mod datasets;
pub mod environments;
pub mod harness;
pub mod model;
pub mod policies;

pub use model::{BeliefState, ModelError, ModelFile, RewardModel, TransitionKernel};
