//! Dynamic data selection with a PPO actor-critic agent.
//!
//! A small classifier trains on a per-epoch subset of its pool. The subset
//! is chosen by an agent that observes the classifier's per-sample feature
//! embedding, is rewarded by a variance-weighted blend of per-sample loss
//! and predictive entropy, and learns with clipped PPO over generalized
//! advantage estimates.
//!
//! Module map:
//!
//! - [`nn`]: dense layers, losses, hand-derived gradients, SGD.
//! - [`model`]: the trainee classifier and its scoring pass.
//! - [`reward`]: difficulty, uncertainty and extra reward channels.
//! - [`ppo`]: actor-critic policy, GAE, clipped objective.
//! - [`selection`]: the closed training loop and agent-free baselines.
//! - [`data`]: dataset generators, label noise, file format.

// `!(x > 0.0)` is how validators here reject NaN along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod matrix;
pub mod model;
pub mod nn;
pub mod ppo;
pub mod reward;
pub mod rng;
pub mod selection;
pub mod stats;

pub use data::{Dataset, MixtureSpec, NoiseSpec, Split};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{ForwardRecord, TargetModel};
pub use nn::{Activation, DenseLayer, Mlp, SgdConfig};
pub use ppo::{ActorCritic, PpoConfig, Trajectory, Transition};
pub use reward::{ChannelMode, ExtraChannel, RewardBundle};
pub use selection::{
    run_training, AgentConfig, LoopConfig, MetricsRecord, RewardConfig, RunOutput, SelectionDecision, SelectionMode,
    Strategy, TraineeConfig, TrainingConfig,
};
