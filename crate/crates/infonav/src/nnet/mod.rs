//! Minimal numerical core: dense layers, spectral normalization,
//! diagonal-Gaussian reparameterization and KL, softmax/cross-entropy,
//! RMSprop, checkpointing, and finite-difference gradient verification.

pub mod checkpoint;
pub mod dense;
pub mod gaussian;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod store;
pub mod tensor;

pub use checkpoint::{Checkpoint, RngState};
pub use dense::{Activation, DenseCache, DenseLayer, LEAKY_SLOPE};
pub use gaussian::{clamp_logvar, gaussian_kl, gaussian_sample, GaussianParams};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{softmax, softmax_cross_entropy};
pub use optim::{RmsProp, RmsPropConfig};
pub use store::{GradientSet, ParamDef, ParamId, ParamStore, SharedParams};
pub use tensor::Tensor;
