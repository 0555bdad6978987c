//! Target-driven grid-world navigation trained by asynchronous
//! advantage actor-critic with a variational mutual-information
//! regularizer on the action/observation channel.

pub mod cli;
pub mod error;
pub mod evalkit;
pub mod navmodel;
pub mod nnet;
pub mod trainer;
pub mod world;

pub use error::{NavError, Result};
