//! The regularized navigation model: shared view encoder, goal-conditioned
//! posterior, expert-action-conditioned prior, next-state decoder, and the
//! policy/value heads, with hand-written backward passes for every variant.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NavError, Result};
use crate::nnet::dense::{standard_normal, Activation, DenseCache, DenseLayer};
use crate::nnet::gaussian::{clamp_logvar, gaussian_sample, sample_backward, GaussianParams};
use crate::nnet::loss::{
    cross_entropy_backward, entropy, entropy_backward, softmax, softmax_cross_entropy,
};
use crate::nnet::store::{GradientSet, ParamStore};
use crate::world::{Action, Observation, Target, ACTION_COUNT};

use super::config::{LossBreakdown, LossWeights, ModelConfig, TargetMode, Variant, ZSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Greedy,
    Sample,
}

/// Per-episode controller memory: the previous action (zero vector at t=0)
/// and the RNG stream used for latent sampling / stochastic action draws.
pub struct ControllerState {
    pub prev: Option<usize>,
    pub rng: ChaCha8Rng,
}

impl ControllerState {
    pub fn new(seed: u64) -> Self {
        ControllerState {
            prev: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Starts a new episode; the RNG stream continues.
    pub fn reset(&mut self) {
        self.prev = None;
    }

    pub fn prev_vec(&self) -> Vec<f64> {
        action_vec(self.prev)
    }
}

/// One-hot of an action index, or the all-zero vector for t=0.
pub fn action_vec(a: Option<usize>) -> Vec<f64> {
    let mut v = vec![0.0; ACTION_COUNT];
    if let Some(i) = a {
        v[i] = 1.0;
    }
    v
}

/// Everything a training step consumes. Expert fields are only read by
/// expert-supervised variants; `chosen_action` only by plain_rl.
#[derive(Clone, Debug)]
pub struct StepInput {
    /// Features of the four views, front first.
    pub views: Vec<Vec<f64>>,
    /// Target features: view features or class one-hot per target mode.
    pub target: Vec<f64>,
    pub prev_action: Option<usize>,
    pub chosen_action: usize,
    pub expert_action: Option<usize>,
    /// Encoded expert next front view f(x_{t+1}^gt), dimension d_s,
    /// pre-computed by the caller (see `encode_state`) and treated as a
    /// constant — the reconstruction target carries no gradient.
    pub recon_target: Option<Vec<f64>>,
    /// Discounted return R_t supplied by the trainer.
    pub return_target: f64,
    /// Fixed latent noise (dimension d_z; empty for non-latent variants).
    pub noise: Vec<f64>,
}

enum TargetTrace {
    View(DenseCache, DenseCache),
    Class(DenseCache),
}

/// Forward-pass record for one step; consumed by `backward`.
pub struct StepTrace {
    enc_caches: Vec<(DenseCache, DenseCache)>,
    tgt_trace: TargetTrace,
    fuse_caches: Vec<DenseCache>,
    post_cache: Option<DenseCache>,
    q: Option<(GaussianParams, Vec<bool>)>,
    prior_caches: Option<(DenseCache, DenseCache)>,
    p: Option<(GaussianParams, Vec<bool>)>,
    noise: Vec<f64>,
    genmap_cache: Option<DenseCache>,
    dec_caches: Option<(DenseCache, DenseCache)>,
    /// s_hat - f(x_next_gt), kept for the reconstruction backward.
    recon_diff: Option<Vec<f64>>,
    /// Unsquared L2 of recon_diff.
    e2_norm: f64,
    aembed_cache: DenseCache,
    trunk_cache: DenseCache,
    head_cache: DenseCache,
    vhead_cache: DenseCache,
    pub logits: Vec<f64>,
    pub value: f64,
    expert_action: Option<usize>,
    chosen_action: usize,
    return_target: f64,
    pub losses: LossBreakdown,
}

struct Nets {
    enc1: DenseLayer,
    enc2: DenseLayer,
    tgt: Option<DenseLayer>,
    fuse: Option<DenseLayer>,
    post: Option<DenseLayer>,
    prior1: Option<DenseLayer>,
    prior2: Option<DenseLayer>,
    genmap: Option<DenseLayer>,
    dec1: Option<DenseLayer>,
    dec2: Option<DenseLayer>,
    aembed: DenseLayer,
    trunk: DenseLayer,
    head: DenseLayer,
    vhead: DenseLayer,
}

/// Layer wiring for a configuration. Parameter ids are indices into the
/// ParamStore built alongside; any store with identical defs (snapshots,
/// loaded checkpoints) is interchangeable.
pub struct NavModel {
    pub cfg: ModelConfig,
    nets: Option<Nets>,
}

impl NavModel {
    /// Builds the wiring and a freshly initialized parameter store.
    pub fn new(cfg: ModelConfig, seed: u64) -> (NavModel, ParamStore) {
        let mut store = ParamStore::new();
        if cfg.variant == Variant::Random {
            return (NavModel { cfg, nets: None }, store);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = &mut rng;
        let s = &mut store;
        let (ds, dz) = (cfg.d_s, cfg.d_z);
        let sn = cfg.spectral_norm;
        let leaky = Activation::LeakyRelu;
        let lin = Activation::Linear;
        let enc1 = DenseLayer::new(s, "enc1", cfg.view_dim, ds, leaky, sn, r);
        let enc2 = DenseLayer::new(s, "enc2", ds, ds, leaky, sn, r);
        let tgt = (cfg.target_mode == TargetMode::Class)
            .then(|| DenseLayer::new(s, "tgt", cfg.classes, ds, leaky, false, r));
        let v = cfg.variant;
        let fuse = v
            .has_generation()
            .then(|| DenseLayer::new(s, "fuse", 2 * ds, ds, leaky, false, r));
        let post_in = if v == Variant::Froview { ds } else { 4 * ds };
        let post = v
            .has_latent()
            .then(|| DenseLayer::new(s, "post", post_in, 2 * dz, lin, false, r));
        let prior1 = v
            .has_prior_net()
            .then(|| DenseLayer::new(s, "prior1", ds + ACTION_COUNT, ds, leaky, false, r));
        let prior2 = v
            .has_prior_net()
            .then(|| DenseLayer::new(s, "prior2", ds, 2 * dz, lin, false, r));
        let genmap = (v == Variant::Nogen)
            .then(|| DenseLayer::new(s, "genmap", 4 * ds, ds, leaky, false, r));
        let dec1 = v
            .has_latent()
            .then(|| DenseLayer::new(s, "dec1", dz, ds, leaky, false, r));
        let dec2 = v
            .has_latent()
            .then(|| DenseLayer::new(s, "dec2", ds, ds, lin, false, r));
        let aembed = DenseLayer::new(s, "aembed", ACTION_COUNT, ds, leaky, false, r);
        // Generative variants feed (s_front, s_hat, a_emb); the others feed
        // the four view states concatenated plus target and a_emb. Pooling
        // the views instead would erase which direction each one faces.
        let trunk_in = if v.has_generation() { 3 * ds } else { 6 * ds };
        let trunk = DenseLayer::new(s, "trunk", trunk_in, ds, leaky, false, r);
        let head = DenseLayer::new(s, "head", ds, ACTION_COUNT, lin, false, r);
        let vhead = DenseLayer::new(s, "vhead", ds, 1, lin, false, r);
        let nets = Nets {
            enc1,
            enc2,
            tgt,
            fuse,
            post,
            prior1,
            prior2,
            genmap,
            dec1,
            dec2,
            aembed,
            trunk,
            head,
            vhead,
        };
        let model = NavModel {
            cfg,
            nets: Some(nets),
        };
        // Settle the spectral-norm power-iteration vectors; with the
        // fresh random u,v the sigma estimate is meaningless and the
        // first forward passes would be wildly mis-scaled.
        model.power_iterate(&mut store, 50);
        (model, store)
    }

    /// Wiring only, for use with an existing parameter store (snapshot or
    /// checkpoint). Ids depend solely on the configuration.
    pub fn layout(cfg: ModelConfig) -> NavModel {
        Self::new(cfg, 0).0
    }

    fn nets(&self) -> &Nets {
        self.nets
            .as_ref()
            .expect("random variant has no parameters")
    }

    /// Spectrally normalized layers, for power iteration after updates.
    pub fn sn_layers(&self) -> Vec<&DenseLayer> {
        match &self.nets {
            None => Vec::new(),
            Some(n) => [&n.enc1, &n.enc2]
                .into_iter()
                .filter(|l| l.sn.is_some())
                .collect(),
        }
    }

    pub fn power_iterate(&self, store: &mut ParamStore, iterations: usize) {
        for layer in self.sn_layers() {
            layer.power_iterate(store, iterations);
        }
    }

    /// Encodes view features to a d_s state without keeping caches; used
    /// by the trainer to pre-compute reconstruction targets.
    pub fn encode_state(&self, store: &ParamStore, feats: &[f64]) -> Vec<f64> {
        self.encode(store, feats).0
    }

    /// Encodes one view's features to a d_s state.
    fn encode(&self, store: &ParamStore, feats: &[f64]) -> (Vec<f64>, (DenseCache, DenseCache)) {
        let n = self.nets();
        let (e1, c1) = n.enc1.forward(store, feats);
        let (s, c2) = n.enc2.forward(store, &e1);
        (s, (c1, c2))
    }

    fn embed_target(&self, store: &ParamStore, target: &[f64]) -> (Vec<f64>, TargetTrace) {
        let n = self.nets();
        match self.cfg.target_mode {
            TargetMode::View => {
                let (g, (c1, c2)) = self.encode(store, target);
                (g, TargetTrace::View(c1, c2))
            }
            TargetMode::Class => {
                let tgt = n.tgt.as_ref().expect("class mode has a target embedder");
                let (g, c) = tgt.forward(store, target);
                (g, TargetTrace::Class(c))
            }
        }
    }

    /// Posterior input: fused views (all four, or front only for froview).
    fn posterior_input(&self, h_views: &[Vec<f64>]) -> Vec<f64> {
        if self.cfg.variant == Variant::Froview {
            h_views[0].clone()
        } else {
            h_views.iter().flatten().copied().collect()
        }
    }

    /// Shared trunk -> logits/value, given the observation block (d_s or
    /// 4*d_s wide), goal/generation block, and action embedding.
    #[allow(clippy::type_complexity)]
    fn heads(
        &self,
        store: &ParamStore,
        block0: &[f64],
        block1: &[f64],
        a_emb: &[f64],
    ) -> (Vec<f64>, f64, (DenseCache, DenseCache, DenseCache)) {
        let n = self.nets();
        let mut trunk_in = Vec::with_capacity(block0.len() + 2 * self.cfg.d_s);
        trunk_in.extend_from_slice(block0);
        trunk_in.extend_from_slice(block1);
        trunk_in.extend_from_slice(a_emb);
        let (t1, ct) = n.trunk.forward(store, &trunk_in);
        let (logits, ch) = n.head.forward(store, &t1);
        let (v, cv) = n.vhead.forward(store, &t1);
        (logits, v[0], (ct, ch, cv))
    }

    /// Full training forward pass for one rollout step. Pure in
    /// (store, input): identical calls produce identical traces.
    pub fn training_losses(
        &self,
        store: &ParamStore,
        input: &StepInput,
        w: &LossWeights,
    ) -> Result<(LossBreakdown, StepTrace)> {
        let cfg = &self.cfg;
        let v = cfg.variant;
        if v == Variant::Random {
            return Err(NavError::Contract("random variant is not trainable".into()));
        }
        let n = self.nets();
        if v.uses_expert() && input.expert_action.is_none() {
            return Err(NavError::Contract(
                "expert action required for supervised variants".into(),
            ));
        }
        if v.has_generation() && input.recon_target.is_none() {
            return Err(NavError::Contract(
                "reconstruction target required for generative variants".into(),
            ));
        }

        // Encode the four views and the target.
        let mut enc_caches = Vec::with_capacity(4);
        let mut s_views = Vec::with_capacity(4);
        for feats in &input.views {
            let (s, c) = self.encode(store, feats);
            s_views.push(s);
            enc_caches.push(c);
        }
        let (g_emb, tgt_trace) = self.embed_target(store, &input.target);

        // Fusion (generative variants).
        let mut fuse_caches = Vec::new();
        let mut h_views = Vec::new();
        if let Some(fuse) = &n.fuse {
            for s in &s_views {
                let mut fin = Vec::with_capacity(2 * cfg.d_s);
                fin.extend_from_slice(s);
                fin.extend_from_slice(&g_emb);
                let (h, c) = fuse.forward(store, &fin);
                h_views.push(h);
                fuse_caches.push(c);
            }
        }

        // Latent path.
        let mut post_cache = None;
        let mut q = None;
        let mut prior_caches = None;
        let mut p = None;
        let mut dec_caches = None;
        let mut genmap_cache = None;
        let mut s_hat: Option<Vec<f64>> = None;
        if v.has_latent() {
            let (q_raw, cq) = n
                .post
                .as_ref()
                .unwrap()
                .forward(store, &self.posterior_input(&h_views));
            let (q_lv, q_mask) = clamp_logvar(&q_raw[cfg.d_z..]);
            let q_params = GaussianParams {
                mean: q_raw[..cfg.d_z].to_vec(),
                logvar: q_lv,
            };
            post_cache = Some(cq);

            let p_params = if v.has_prior_net() {
                let a_gt = input.expert_action.unwrap();
                let mut pin = Vec::with_capacity(cfg.d_s + ACTION_COUNT);
                pin.extend_from_slice(&s_views[0]);
                pin.extend_from_slice(&action_vec(Some(a_gt)));
                let (p1, cp1) = n.prior1.as_ref().unwrap().forward(store, &pin);
                let (p_raw, cp2) = n.prior2.as_ref().unwrap().forward(store, &p1);
                let (p_lv, p_mask) = clamp_logvar(&p_raw[cfg.d_z..]);
                prior_caches = Some((cp1, cp2));
                let params = GaussianParams {
                    mean: p_raw[..cfg.d_z].to_vec(),
                    logvar: p_lv,
                };
                p = Some((params.clone(), p_mask));
                params
            } else {
                // vanillagen: fixed standard-normal prior.
                let params = GaussianParams::standard(cfg.d_z);
                p = Some((params.clone(), vec![false; cfg.d_z]));
                params
            };

            let z_src = if v.has_prior_net() && cfg.policy_z_source == ZSource::Prior {
                &p_params
            } else {
                &q_params
            };
            assert_eq!(input.noise.len(), cfg.d_z, "latent noise dimension");
            let z = gaussian_sample(z_src, &input.noise);
            q = Some((q_params, q_mask));
            let (d1, cd1) = n.dec1.as_ref().unwrap().forward(store, &z);
            let (sh, cd2) = n.dec2.as_ref().unwrap().forward(store, &d1);
            dec_caches = Some((cd1, cd2));
            s_hat = Some(sh);
        } else if v == Variant::Nogen {
            let gin: Vec<f64> = h_views.iter().flatten().copied().collect();
            let (sh, cg) = n.genmap.as_ref().unwrap().forward(store, &gin);
            genmap_cache = Some(cg);
            s_hat = Some(sh);
        }

        // Reconstruction term against the pre-encoded expert next front
        // view (a constant by the stop-gradient convention).
        let mut recon_diff = None;
        let mut e2_norm = 0.0;
        let mut e2 = 0.0;
        if let Some(sh) = &s_hat {
            let target_enc = input.recon_target.as_ref().unwrap();
            let diff: Vec<f64> = sh.iter().zip(target_enc).map(|(a, b)| a - b).collect();
            let sq: f64 = diff.iter().map(|d| d * d).sum();
            e2_norm = sq.sqrt();
            e2 = if cfg.squared_recon { sq } else { e2_norm };
            recon_diff = Some(diff);
        }

        // Policy trunk and heads.
        let (a_emb, ca) = n.aembed.forward(store, &action_vec(input.prev_action));
        let (logits, value, (ct, chd, cv)) = if v.has_generation() {
            self.heads(store, &s_views[0], s_hat.as_ref().unwrap(), &a_emb)
        } else {
            let cat: Vec<f64> = s_views.iter().flatten().copied().collect();
            self.heads(store, &cat, &g_emb, &a_emb)
        };

        // Loss terms.
        let e3 = match (&q, &p) {
            (Some((qp, _)), Some((pp, _))) => crate::nnet::gaussian::gaussian_kl(qp, pp),
            _ => 0.0,
        };
        let l_v = {
            let d = input.return_target - value;
            d * d
        };
        let e1 = match v {
            Variant::PlainRl => {
                let adv = input.return_target - value;
                let probs = softmax(&logits);
                softmax_cross_entropy(&logits, input.chosen_action) * adv
                    - w.entropy_coef * entropy(&probs)
            }
            _ => softmax_cross_entropy(&logits, input.expert_action.unwrap()),
        };
        let losses = LossBreakdown {
            e1,
            e2,
            e3,
            l_v,
            total: w.alpha * e1 + w.beta * e2 + w.gamma * e3 + w.effective_omega(v) * l_v,
        };
        let trace = StepTrace {
            enc_caches,
            tgt_trace,
            fuse_caches,
            post_cache,
            q,
            prior_caches,
            p,
            noise: input.noise.clone(),
            genmap_cache,
            dec_caches,
            recon_diff,
            e2_norm,
            aembed_cache: ca,
            trunk_cache: ct,
            head_cache: chd,
            vhead_cache: cv,
            logits,
            value,
            expert_action: input.expert_action,
            chosen_action: input.chosen_action,
            return_target: input.return_target,
            losses,
        };
        Ok((losses, trace))
    }

    /// Accumulates `scale * d(total)/d(params)` for one traced step.
    pub fn backward(
        &self,
        store: &ParamStore,
        trace: &StepTrace,
        w: &LossWeights,
        grads: &mut GradientSet,
        scale: f64,
    ) {
        let cfg = &self.cfg;
        let v = cfg.variant;
        let n = self.nets();
        let (ds, dz) = (cfg.d_s, cfg.d_z);

        // Head gradients.
        let mut dlogits = vec![0.0; ACTION_COUNT];
        match v {
            Variant::PlainRl => {
                // d/dlogits of adv * CE(chosen) - c_H * H, advantage and
                // value treated as constants for the policy term.
                let adv = trace.return_target - trace.value;
                cross_entropy_backward(
                    &trace.logits,
                    trace.chosen_action,
                    scale * w.alpha * adv,
                    &mut dlogits,
                );
                entropy_backward(
                    &trace.logits,
                    -scale * w.alpha * w.entropy_coef,
                    &mut dlogits,
                );
            }
            _ => cross_entropy_backward(
                &trace.logits,
                trace.expert_action.unwrap(),
                scale * w.alpha,
                &mut dlogits,
            ),
        }
        let dvalue = scale * w.effective_omega(v) * 2.0 * (trace.value - trace.return_target);

        let dt1_head = n.head.backward(store, &trace.head_cache, &dlogits, grads);
        let dt1_val = n.vhead.backward(store, &trace.vhead_cache, &[dvalue], grads);
        let dt1: Vec<f64> = dt1_head.iter().zip(&dt1_val).map(|(a, b)| a + b).collect();
        let dtrunk_in = n.trunk.backward(store, &trace.trunk_cache, &dt1, grads);
        let b0 = if v.has_generation() { ds } else { 4 * ds };
        let (dblock0, dblock1, da_emb) = (
            &dtrunk_in[..b0],
            &dtrunk_in[b0..b0 + ds],
            &dtrunk_in[b0 + ds..],
        );
        n.aembed.backward(store, &trace.aembed_cache, da_emb, grads);

        // Per-view state and target-embedding gradient accumulators.
        let mut ds_views: Vec<Vec<f64>> = (0..4).map(|_| vec![0.0; ds]).collect();
        let mut dg = vec![0.0; ds];

        if v.has_generation() {
            // block0 = s_front, block1 = s_hat.
            for (acc, d) in ds_views[0].iter_mut().zip(dblock0) {
                *acc += d;
            }
            let mut dshat = dblock1.to_vec();
            if let Some(diff) = &trace.recon_diff {
                if cfg.squared_recon {
                    for (d, &x) in dshat.iter_mut().zip(diff) {
                        *d += scale * w.beta * 2.0 * x;
                    }
                } else if trace.e2_norm > 1e-12 {
                    for (d, &x) in dshat.iter_mut().zip(diff) {
                        *d += scale * w.beta * x / trace.e2_norm;
                    }
                }
            }

            let dh_concat: Vec<f64>;
            if v.has_latent() {
                let (cd1, cd2) = trace.dec_caches.as_ref().unwrap();
                let dd1 = n.dec2.as_ref().unwrap().backward(store, cd2, &dshat, grads);
                let dz_vec = n.dec1.as_ref().unwrap().backward(store, cd1, &dd1, grads);

                let (q_params, q_mask) = trace.q.as_ref().unwrap();
                let (p_params, p_mask) = trace.p.as_ref().unwrap();
                let mut dmu_q = vec![0.0; dz];
                let mut dlv_q = vec![0.0; dz];
                let mut dmu_p = vec![0.0; dz];
                let mut dlv_p = vec![0.0; dz];

                // Reparameterized-sample gradient into the z source.
                let z_from_prior = v.has_prior_net() && cfg.policy_z_source == ZSource::Prior;
                if z_from_prior {
                    sample_backward(p_params, &trace.noise, &dz_vec, &mut dmu_p, &mut dlv_p);
                } else {
                    sample_backward(q_params, &trace.noise, &dz_vec, &mut dmu_q, &mut dlv_q);
                }
                // KL term.
                crate::nnet::gaussian::kl_backward(
                    q_params,
                    p_params,
                    scale * w.gamma,
                    &mut dmu_q,
                    &mut dlv_q,
                    &mut dmu_p,
                    &mut dlv_p,
                );

                // Posterior head (logvar grads masked where clamped).
                let mut dq_raw = vec![0.0; 2 * dz];
                dq_raw[..dz].copy_from_slice(&dmu_q);
                for i in 0..dz {
                    dq_raw[dz + i] = if q_mask[i] { dlv_q[i] } else { 0.0 };
                }
                let dpost_in =
                    n.post
                        .as_ref()
                        .unwrap()
                        .backward(store, trace.post_cache.as_ref().unwrap(), &dq_raw, grads);
                dh_concat = if v == Variant::Froview {
                    let mut d = dpost_in;
                    d.resize(4 * ds, 0.0);
                    d
                } else {
                    dpost_in
                };

                // Prior nets (absent for vanillagen, whose prior is fixed).
                if v.has_prior_net() {
                    let mut dp_raw = vec![0.0; 2 * dz];
                    dp_raw[..dz].copy_from_slice(&dmu_p);
                    for i in 0..dz {
                        dp_raw[dz + i] = if p_mask[i] { dlv_p[i] } else { 0.0 };
                    }
                    let (cp1, cp2) = trace.prior_caches.as_ref().unwrap();
                    let dp1 = n.prior2.as_ref().unwrap().backward(store, cp2, &dp_raw, grads);
                    let dpin = n.prior1.as_ref().unwrap().backward(store, cp1, &dp1, grads);
                    for (acc, d) in ds_views[0].iter_mut().zip(&dpin[..ds]) {
                        *acc += d;
                    }
                }
            } else {
                // nogen: deterministic map from the fused views.
                dh_concat = n.genmap.as_ref().unwrap().backward(
                    store,
                    trace.genmap_cache.as_ref().unwrap(),
                    &dshat,
                    grads,
                );
            }

            // Fusion backward (shared weights across the four views).
            let fuse = n.fuse.as_ref().unwrap();
            for view in 0..4 {
                let dh = &dh_concat[view * ds..(view + 1) * ds];
                if dh.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let dfin = fuse.backward(store, &trace.fuse_caches[view], dh, grads);
                for (acc, d) in ds_views[view].iter_mut().zip(&dfin[..ds]) {
                    *acc += d;
                }
                for (acc, d) in dg.iter_mut().zip(&dfin[ds..]) {
                    *acc += d;
                }
            }
        } else {
            // bc / plain_rl: block0 = the four view states concatenated,
            // block1 = target embedding.
            for (view, dsv) in ds_views.iter_mut().enumerate() {
                for (acc, d) in dsv.iter_mut().zip(&dblock0[view * ds..(view + 1) * ds]) {
                    *acc += d;
                }
            }
            for (acc, d) in dg.iter_mut().zip(dblock1) {
                *acc += d;
            }
        }

        // Target embedding backward.
        match &trace.tgt_trace {
            TargetTrace::View(c1, c2) => {
                let de1 = n.enc2.backward(store, c2, &dg, grads);
                n.enc1.backward(store, c1, &de1, grads);
            }
            TargetTrace::Class(c) => {
                n.tgt.as_ref().unwrap().backward(store, c, &dg, grads);
            }
        }

        // Encoder backward per view.
        for view in 0..4 {
            let (c1, c2) = &trace.enc_caches[view];
            let de1 = n.enc2.backward(store, c2, &ds_views[view], grads);
            n.enc1.backward(store, c1, &de1, grads);
        }
    }

    /// Test-time forward: z comes from the posterior (no expert inputs
    /// anywhere on this path). Returns (logits, value).
    pub fn test_forward(
        &self,
        store: &ParamStore,
        views: &[Vec<f64>],
        target: &[f64],
        prev_action: Option<usize>,
        noise: &[f64],
    ) -> (Vec<f64>, f64) {
        let cfg = &self.cfg;
        let n = self.nets();
        let s_views: Vec<Vec<f64>> = views.iter().map(|f| self.encode(store, f).0).collect();
        let (g_emb, _) = self.embed_target(store, target);
        let (a_emb, _) = n.aembed.forward(store, &action_vec(prev_action));

        let (logits, value, _) = if cfg.variant.has_generation() {
            let fuse = n.fuse.as_ref().unwrap();
            let h_views: Vec<Vec<f64>> = s_views
                .iter()
                .map(|s| {
                    let mut fin = Vec::with_capacity(2 * cfg.d_s);
                    fin.extend_from_slice(s);
                    fin.extend_from_slice(&g_emb);
                    fuse.forward(store, &fin).0
                })
                .collect();
            let s_hat = if cfg.variant.has_latent() {
                let (q_raw, _) = n
                    .post
                    .as_ref()
                    .unwrap()
                    .forward(store, &self.posterior_input(&h_views));
                let (q_lv, _) = clamp_logvar(&q_raw[cfg.d_z..]);
                let q = GaussianParams {
                    mean: q_raw[..cfg.d_z].to_vec(),
                    logvar: q_lv,
                };
                let z = gaussian_sample(&q, noise);
                let (d1, _) = n.dec1.as_ref().unwrap().forward(store, &z);
                n.dec2.as_ref().unwrap().forward(store, &d1).0
            } else {
                let gin: Vec<f64> = h_views.iter().flatten().copied().collect();
                n.genmap.as_ref().unwrap().forward(store, &gin).0
            };
            self.heads(store, &s_views[0], &s_hat, &a_emb)
        } else {
            let cat: Vec<f64> = s_views.iter().flatten().copied().collect();
            self.heads(store, &cat, &g_emb, &a_emb)
        };
        (logits, value)
    }

    /// Feature extraction matching the model's view/target conventions.
    pub fn observation_features(&self, obs: &Observation) -> Vec<Vec<f64>> {
        obs.views
            .iter()
            .map(|v| v.features(self.cfg.classes))
            .collect()
    }

    pub fn target_features(&self, target: &Target) -> Vec<f64> {
        match target {
            Target::View(v) => v.features(self.cfg.classes),
            Target::Class(onehot) => onehot.clone(),
        }
    }

    /// Test-time controller step; never consults expert data.
    pub fn act(
        &self,
        store: &ParamStore,
        obs: &Observation,
        target: &Target,
        ctrl: &mut ControllerState,
        mode: ActMode,
    ) -> Action {
        let action = if self.cfg.variant == Variant::Random {
            Action::from_index(ctrl.rng.gen_range(0..ACTION_COUNT))
        } else {
            let views = self.observation_features(obs);
            let tgt = self.target_features(target);
            let noise: Vec<f64> = if self.cfg.variant.has_latent() {
                (0..self.cfg.d_z)
                    .map(|_| standard_normal(&mut ctrl.rng))
                    .collect()
            } else {
                Vec::new()
            };
            let (logits, _) = self.test_forward(store, &views, &tgt, ctrl.prev, &noise);
            match mode {
                ActMode::Greedy => Action::from_index(argmax(&logits)),
                ActMode::Sample => {
                    Action::from_index(sample_categorical(&softmax(&logits), &mut ctrl.rng))
                }
            }
        };
        ctrl.prev = Some(action.index());
        action
    }

    /// Value estimate for the bootstrap term, on the test-time path.
    pub fn value_estimate(
        &self,
        store: &ParamStore,
        views: &[Vec<f64>],
        target: &[f64],
        prev_action: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        if self.cfg.variant == Variant::Random {
            return 0.0;
        }
        let noise: Vec<f64> = if self.cfg.variant.has_latent() {
            (0..self.cfg.d_z).map(|_| standard_normal(rng)).collect()
        } else {
            Vec::new()
        };
        self.test_forward(store, views, target, prev_action, &noise).1
    }
}

/// Lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::gradcheck::grad_check;

    fn small_cfg(variant: Variant) -> ModelConfig {
        ModelConfig {
            view_dim: 10,
            classes: 6,
            d_s: 8,
            d_z: 4,
            variant,
            ..ModelConfig::default()
        }
    }

    fn random_input(cfg: &ModelConfig, seed: u64) -> StepInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vec_of = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let views = (0..4).map(|_| vec_of(cfg.view_dim)).collect();
        let target = match cfg.target_mode {
            TargetMode::View => vec_of(cfg.view_dim),
            TargetMode::Class => {
                let mut t = vec![0.0; cfg.classes];
                t[2] = 1.0;
                t
            }
        };
        let recon_target = vec_of(cfg.d_s);
        let noise = vec_of(cfg.d_z);
        StepInput {
            views,
            target,
            prev_action: Some(4),
            chosen_action: 1,
            expert_action: Some(3),
            recon_target: Some(recon_target),
            return_target: 1.5,
            noise,
        }
    }

    #[test]
    fn loss_composition_is_exact() {
        for variant in [
            Variant::Full,
            Variant::Nogen,
            Variant::Vanillagen,
            Variant::Froview,
            Variant::Bc,
        ] {
            let cfg = small_cfg(variant);
            let (model, store) = NavModel::new(cfg, 5);
            let input = random_input(&cfg, 9);
            let w = LossWeights::default();
            let (l, _) = model.training_losses(&store, &input, &w).unwrap();
            let expect = w.alpha * l.e1
                + w.beta * l.e2
                + w.gamma * l.e3
                + w.effective_omega(variant) * l.l_v;
            assert!((l.total - expect).abs() < 1e-12, "{variant:?}");
            assert!(l.e1 >= 0.0 && l.e2 >= 0.0 && l.e3 >= 0.0 && l.l_v >= 0.0, "{variant:?}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for variant in [
            Variant::Full,
            Variant::Nogen,
            Variant::Vanillagen,
            Variant::Froview,
            Variant::Bc,
        ] {
            let cfg = small_cfg(variant);
            let (model, mut store) = NavModel::new(cfg, 7);
            let input = random_input(&cfg, 3);
            let w = LossWeights::default();
            let (_, trace) = model.training_losses(&store, &input, &w).unwrap();
            let mut grads = store.grad_zeros();
            model.backward(&store, &trace, &w, &mut grads, 1.0);
            let report = grad_check(
                &mut store,
                &grads,
                |s| model.training_losses(s, &input, &w).unwrap().0.total,
                15,
                42,
            );
            assert!(
                report.passed(1e-4),
                "{variant:?}: max rel err {}",
                report.max_rel_err()
            );
        }
    }

    #[test]
    fn posterior_z_source_gradients_also_check() {
        let cfg = ModelConfig {
            policy_z_source: ZSource::Posterior,
            ..small_cfg(Variant::Full)
        };
        let (model, mut store) = NavModel::new(cfg, 7);
        let input = random_input(&cfg, 3);
        let w = LossWeights::default();
        let (_, trace) = model.training_losses(&store, &input, &w).unwrap();
        let mut grads = store.grad_zeros();
        model.backward(&store, &trace, &w, &mut grads, 1.0);
        let report = grad_check(
            &mut store,
            &grads,
            |s| model.training_losses(s, &input, &w).unwrap().0.total,
            15,
            13,
        );
        assert!(report.passed(1e-4), "max rel err {}", report.max_rel_err());
    }

    #[test]
    fn class_target_mode_gradients_check() {
        let cfg = ModelConfig {
            target_mode: TargetMode::Class,
            ..small_cfg(Variant::Full)
        };
        let (model, mut store) = NavModel::new(cfg, 8);
        let input = random_input(&cfg, 4);
        let w = LossWeights::default();
        let (_, trace) = model.training_losses(&store, &input, &w).unwrap();
        let mut grads = store.grad_zeros();
        model.backward(&store, &trace, &w, &mut grads, 1.0);
        let report = grad_check(
            &mut store,
            &grads,
            |s| model.training_losses(s, &input, &w).unwrap().0.total,
            15,
            21,
        );
        assert!(report.passed(1e-4), "max rel err {}", report.max_rel_err());
    }

    #[test]
    fn plain_rl_backward_is_finite() {
        let cfg = small_cfg(Variant::PlainRl);
        let (model, store) = NavModel::new(cfg, 6);
        let mut input = random_input(&cfg, 2);
        input.expert_action = None;
        input.recon_target = None;
        input.noise = Vec::new();
        let w = LossWeights::default();
        let (l, trace) = model.training_losses(&store, &input, &w).unwrap();
        assert!(l.is_finite());
        assert_eq!(l.e2, 0.0);
        assert_eq!(l.e3, 0.0);
        let mut grads = store.grad_zeros();
        model.backward(&store, &trace, &w, &mut grads, 1.0);
        assert!(grads.is_finite());
    }

    #[test]
    fn zeroed_heads_give_uniform_cross_entropy() {
        let cfg = small_cfg(Variant::Full);
        let (model, mut store) = NavModel::new(cfg, 1);
        let head_w = store.index_of("head.w").unwrap();
        let head_b = store.index_of("head.b").unwrap();
        store.get_mut(head_w).data.fill(0.0);
        store.get_mut(head_b).data.fill(0.0);
        let input = random_input(&cfg, 1);
        let (l, _) = model
            .training_losses(&store, &input, &LossWeights::default())
            .unwrap();
        assert!((l.e1 - (7.0f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn zeroed_latent_nets_make_kl_zero() {
        let cfg = small_cfg(Variant::Full);
        let (model, mut store) = NavModel::new(cfg, 1);
        for name in ["post.w", "post.b", "prior1.w", "prior1.b", "prior2.w", "prior2.b"] {
            let id = store.index_of(name).unwrap();
            store.get_mut(id).data.fill(0.0);
        }
        let input = random_input(&cfg, 1);
        let (l, _) = model
            .training_losses(&store, &input, &LossWeights::default())
            .unwrap();
        assert!(l.e3.abs() < 1e-12);
    }

    #[test]
    fn bc_ignores_expert_next_observation() {
        let cfg = small_cfg(Variant::Bc);
        let (model, store) = NavModel::new(cfg, 2);
        let w = LossWeights::default();
        let mut a = random_input(&cfg, 5);
        let mut b = a.clone();
        a.recon_target = Some(vec![0.25; cfg.d_s]);
        b.recon_target = None;
        let (la, _) = model.training_losses(&store, &a, &w).unwrap();
        let (lb, _) = model.training_losses(&store, &b, &w).unwrap();
        assert_eq!(la.total, lb.total);
        assert_eq!(la.e2, 0.0);
    }

    fn test_scene_obs() -> (Observation, Target) {
        use crate::world::{observe, Pose, RenderParams, SceneFile};
        let scene = SceneFile {
            id: 0,
            width: 7,
            height: 7,
            cell_size_m: 0.5,
            occupancy: (0..7)
                .map(|y| {
                    (0..7)
                        .map(|x| if x == 0 || y == 0 || x == 6 || y == 6 { '#' } else { '.' })
                        .collect()
                })
                .collect(),
            objects: vec![],
        }
        .into_scene()
        .unwrap();
        let params = RenderParams::default();
        let obs = observe(&scene, Pose { x: 3, y: 3, heading: 0 }, &params);
        let tgt = Target::View(obs.views[1].clone());
        (obs, tgt)
    }

    #[test]
    fn greedy_act_is_deterministic_and_shift_invariant() {
        let cfg = ModelConfig::default();
        let (model, mut store) = NavModel::new(cfg, 3);
        let (obs, tgt) = test_scene_obs();
        let mut c1 = ControllerState::new(11);
        let mut c2 = ControllerState::new(11);
        let a1 = model.act(&store, &obs, &tgt, &mut c1, ActMode::Greedy);
        let a2 = model.act(&store, &obs, &tgt, &mut c2, ActMode::Greedy);
        assert_eq!(a1, a2);
        // Adding a constant to every logit (via the head bias) leaves the
        // greedy action unchanged.
        let head_b = store.index_of("head.b").unwrap();
        for b in &mut store.get_mut(head_b).data {
            *b += 3.7;
        }
        let mut c3 = ControllerState::new(11);
        let a3 = model.act(&store, &obs, &tgt, &mut c3, ActMode::Greedy);
        assert_eq!(a1, a3);
    }

    #[test]
    fn previous_action_input_is_wired() {
        let cfg = small_cfg(Variant::Full);
        let (model, store) = NavModel::new(cfg, 4);
        let input = random_input(&cfg, 6);
        let logits_none = model
            .test_forward(&store, &input.views, &input.target, None, &input.noise)
            .0;
        let logits_prev = model
            .test_forward(&store, &input.views, &input.target, Some(0), &input.noise)
            .0;
        assert_ne!(logits_none, logits_prev);
    }

    #[test]
    fn random_variant_needs_no_parameters() {
        let cfg = small_cfg(Variant::Random);
        let (model, store) = NavModel::new(cfg, 0);
        assert!(store.is_empty());
        let (obs, tgt) = test_scene_obs();
        let mut ctrl = ControllerState::new(5);
        let a = model.act(&store, &obs, &tgt, &mut ctrl, ActMode::Greedy);
        assert!(a.index() < ACTION_COUNT);
    }

    #[test]
    fn view_permutation_changes_posterior_inputs() {
        let cfg = small_cfg(Variant::Full);
        let (model, store) = NavModel::new(cfg, 9);
        let input = random_input(&cfg, 8);
        let mut permuted = input.clone();
        permuted.views.swap(1, 3);
        let l_a = model
            .test_forward(&store, &input.views, &input.target, None, &input.noise)
            .0;
        let l_b = model
            .test_forward(&store, &permuted.views, &permuted.target, None, &permuted.noise)
            .0;
        assert_ne!(l_a, l_b);
    }
}
