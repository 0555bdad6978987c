//! Training loop: rollout collection, return computation, synchronized
//! multi-worker updates, curriculum staging, and validation management.

pub mod config;
pub mod rollout;
pub mod train;

pub use config::TrainConfig;
pub use rollout::{collect_rollout, compute_returns, replay_expert, RolloutStep, WorkerEnv};
pub use train::{
    build_stage_pools, train, validate, TrainLogRecord, TrainOutcome, ValRecord,
};
