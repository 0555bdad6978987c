//! Full-loss gradient verification harness used by the gradcheck command
//! and the acceptance suite.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NavError, Result};
use crate::navmodel::{LossWeights, ModelConfig, NavModel, StepInput, TargetMode, Variant};
use crate::nnet::dense::standard_normal;
use crate::nnet::{grad_check, GradCheckReport};

/// A randomized but fixed training step for the given configuration.
pub fn synthetic_input(cfg: &ModelConfig, seed: u64) -> StepInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let views = (0..4)
        .map(|_| (0..cfg.view_dim).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let target = match cfg.target_mode {
        TargetMode::View => (0..cfg.view_dim).map(|_| rng.gen_range(0.0..1.0)).collect(),
        TargetMode::Class => {
            let mut onehot = vec![0.0; cfg.classes];
            onehot[rng.gen_range(0..cfg.classes)] = 1.0;
            onehot
        }
    };
    let recon_target = cfg
        .variant
        .has_generation()
        .then(|| (0..cfg.d_s).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let noise = if cfg.variant.has_latent() {
        (0..cfg.d_z).map(|_| standard_normal(&mut rng)).collect()
    } else {
        Vec::new()
    };
    StepInput {
        views,
        target,
        prev_action: Some(rng.gen_range(0..7)),
        chosen_action: rng.gen_range(0..7),
        expert_action: cfg.variant.uses_expert().then(|| rng.gen_range(0..7)),
        recon_target,
        // Kept at unit scale: a large return inflates the value term until
        // central differences of the total drown in f64 rounding.
        return_target: rng.gen_range(-1.0..1.0),
        noise,
    }
}

/// Finite-difference check of the analytic gradient of the complete loss
/// for one configuration. `fault` injects a deliberate gradient error so
/// the harness's own sensitivity can be demonstrated.
pub fn full_loss_gradcheck(
    cfg: ModelConfig,
    probes: usize,
    seed: u64,
    fault: bool,
) -> Result<GradCheckReport> {
    if cfg.variant == Variant::Random {
        return Err(NavError::Config("random variant has no gradients".into()));
    }
    let (model, mut store) = NavModel::new(cfg, seed);
    let input = synthetic_input(&cfg, seed.wrapping_add(1));
    let w = LossWeights::default();
    let (_, trace) = model.training_losses(&store, &input, &w)?;
    let mut grads = store.grad_zeros();
    model.backward(&store, &trace, &w, &mut grads, 1.0);
    if fault {
        // Corrupt one whole group so any probed coordinate exposes it;
        // scale-invariant so large gradients cannot mask the fault.
        let id = store
            .defs()
            .iter()
            .position(|d| d.trainable)
            .expect("trainable group exists");
        for g in &mut grads.grads[id].data {
            *g = 0.5 * *g + 1.0;
        }
    }
    let loss_fn = |s: &crate::nnet::ParamStore| {
        model
            .training_losses(s, &input, &w)
            .expect("loss evaluates")
            .0
            .total
    };
    Ok(grad_check(&mut store, &grads, loss_fn, probes, seed))
}
