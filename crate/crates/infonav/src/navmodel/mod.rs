//! Regularized navigation model: architecture variants, loss terms, and
//! the test-time controller path.

pub mod config;
pub mod model;

pub use config::{LossBreakdown, LossWeights, ModelConfig, TargetMode, Variant, ZSource};
pub use model::{
    action_vec, argmax, sample_categorical, ActMode, ControllerState, NavModel, StepInput,
    StepTrace,
};
