//! Model configuration: dimensions, variant selection, and loss weights.

use serde::{Deserialize, Serialize};

/// Training/architecture variants. Each maps to a documented loss or
/// wiring delta relative to `Full`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Complete model: generative next-state path, expert supervision,
    /// KL(q||p) regularizer, auxiliary value loss.
    Full,
    /// Full with the value-loss weight forced to zero.
    Noval,
    /// Deterministic next-state map; no latent, no KL.
    Nogen,
    /// Standard-normal latent prior: KL(q||N(0,I)), z drawn from q.
    Vanillagen,
    /// Posterior reads the front view only.
    Froview,
    /// Behavioral cloning: policy cross-entropy straight from the fused
    /// inputs; never touches the expert next observation.
    Bc,
    /// Advantage actor-critic with an entropy bonus; no expert terms.
    PlainRl,
    /// Uniform-random policy; no parameters, evaluation baseline.
    Random,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Noval => "noval",
            Variant::Nogen => "nogen",
            Variant::Vanillagen => "vanillagen",
            Variant::Froview => "froview",
            Variant::Bc => "bc",
            Variant::PlainRl => "plain_rl",
            Variant::Random => "random",
        }
    }

    /// Variants with the latent z / decoder path.
    pub fn has_latent(self) -> bool {
        matches!(
            self,
            Variant::Full | Variant::Noval | Variant::Vanillagen | Variant::Froview
        )
    }

    /// Variants with a learned prior network (vanillagen uses N(0,I)).
    pub fn has_prior_net(self) -> bool {
        matches!(self, Variant::Full | Variant::Noval | Variant::Froview)
    }

    /// Variants that generate a next-state representation at all.
    pub fn has_generation(self) -> bool {
        self.has_latent() || self == Variant::Nogen
    }

    /// Variants supervised by the shortest-path expert.
    pub fn uses_expert(self) -> bool {
        !matches!(self, Variant::PlainRl | Variant::Random)
    }
}

/// Where the policy's z comes from during training (test time always uses
/// the posterior, which needs no expert action).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ZSource {
    Prior,
    Posterior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Target is a single view; embedded by the shared encoder.
    View,
    /// Target is a class one-hot; embedded by a learned linear map.
    Class,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Per-view feature dimension R*(K+2).
    pub view_dim: usize,
    /// Object class count K.
    pub classes: usize,
    /// State dimension d_s.
    pub d_s: usize,
    /// Latent dimension d_z.
    pub d_z: usize,
    pub variant: Variant,
    pub policy_z_source: ZSource,
    pub target_mode: TargetMode,
    /// Spectral normalization on the encoder layers.
    pub spectral_norm: bool,
    /// Use the squared L2 norm for the reconstruction term.
    pub squared_recon: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            view_dim: 72,
            classes: 6,
            d_s: 64,
            d_z: 32,
            variant: Variant::Full,
            policy_z_source: ZSource::Prior,
            target_mode: TargetMode::View,
            spectral_norm: true,
            squared_recon: false,
        }
    }
}

/// Loss weights and discount.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub omega: f64,
    pub tau: f64,
    /// Entropy-bonus coefficient (plain_rl only).
    pub entropy_coef: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 0.01,
            gamma: 0.0001,
            omega: 0.5,
            tau: 0.99,
            entropy_coef: 0.01,
        }
    }
}

impl LossWeights {
    /// Value-loss weight actually applied for a variant: noval drops the
    /// value term by definition, and behavioral cloning is plain
    /// action cross-entropy with no value regression.
    pub fn effective_omega(&self, variant: Variant) -> f64 {
        match variant {
            Variant::Noval | Variant::Bc => 0.0,
            _ => self.omega,
        }
    }
}

/// Per-step loss terms; all already sign-adjusted for minimization.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Predictive control (policy cross-entropy vs the expert action); the
    /// policy-gradient surrogate for plain_rl.
    pub e1: f64,
    /// Next-state reconstruction.
    pub e2: f64,
    /// Latent KL.
    pub e3: f64,
    /// Value regression (R_t - v)^2.
    pub l_v: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, other: &LossBreakdown) {
        self.e1 += other.e1;
        self.e2 += other.e2;
        self.e3 += other.e3;
        self.l_v += other.l_v;
        self.total += other.total;
    }

    pub fn scale(&mut self, s: f64) {
        self.e1 *= s;
        self.e2 *= s;
        self.e3 *= s;
        self.l_v *= s;
        self.total *= s;
    }

    pub fn is_finite(&self) -> bool {
        self.e1.is_finite()
            && self.e2.is_finite()
            && self.e3.is_finite()
            && self.l_v.is_finite()
            && self.total.is_finite()
    }
}
