//! Policy-gradient learning: softmax policies over server assignments, the
//! work-conserving mask, regeneration-truncated GAE, behavior cloning and
//! PPO, all on small tanh networks with hand-written backpropagation.

pub mod gae;
pub mod mlp;
pub mod optim;
pub mod policy;
pub mod ppo;
pub mod train;

use thiserror::Error;

use crate::engine::EngineError;

pub use gae::{compute_gae, RunningStats};
pub use mlp::Mlp;
pub use policy::{bc_target, wc_mask, Masking, SoftmaxPolicy, StochasticPolicy, WC_EPS};
pub use ppo::{RolloutBuffer, Sample};
pub use train::{behavior_clone, train, Algorithm, BcConfig, EpisodeRecord, TrainConfig, TrainOutcome, Trainer};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("non-finite values in {0}; update aborted")]
    NonFinite(&'static str),
    #[error("unknown algorithm (expected ppo, ppo-bc, ppo-wc or pg-wc)")]
    UnknownAlgorithm,
    #[error(transparent)]
    Engine(#[from] EngineError),
}
