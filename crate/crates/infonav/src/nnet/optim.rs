//! RMSprop with the paper's smoothing constant as default.

use serde::{Deserialize, Serialize};

use super::store::{GradientSet, ParamStore};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub smoothing: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            lr: 1e-4,
            smoothing: 0.99,
            eps: 1e-8,
        }
    }
}

/// Single-owner RMSprop state, used by the deterministic inline trainer and
/// by small optimization tests. The concurrent path lives in SharedParams.
pub struct RmsProp {
    pub cfg: RmsPropConfig,
    pub state: Vec<Tensor>,
}

impl RmsProp {
    pub fn new(store: &ParamStore, cfg: RmsPropConfig) -> Self {
        let state = store
            .defs()
            .iter()
            .map(|d| Tensor::zeros(d.rows, d.cols))
            .collect();
        RmsProp { cfg, state }
    }

    /// Returns false (update rejected) when the gradient is non-finite.
    pub fn update(&mut self, store: &mut ParamStore, grads: &GradientSet) -> bool {
        if !grads.is_finite() {
            return false;
        }
        for id in 0..store.len() {
            if !store.defs()[id].trainable {
                continue;
            }
            let g = &grads.grads[id];
            let v = &mut self.state[id];
            let p = store.get_mut(id);
            for i in 0..g.data.len() {
                let gi = g.data[i];
                v.data[i] = self.cfg.smoothing * v.data[i] + (1.0 - self.cfg.smoothing) * gi * gi;
                p.data[i] -= self.cfg.lr * gi / (v.data[i].sqrt() + self.cfg.eps);
            }
        }
        let ver = store.version() + 1;
        store.set_version(ver);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::tensor::Tensor;

    fn one_param_store(v: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let n = v.len();
        s.add("p", Tensor { rows: n, cols: 1, data: v }, true);
        s
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut store = one_param_store(vec![1.0, -2.0]);
        let mut opt = RmsProp::new(&store, RmsPropConfig::default());
        let grads = store.grad_zeros();
        assert!(opt.update(&mut store, &grads));
        assert_eq!(store.get(0).data, vec![1.0, -2.0]);
    }

    #[test]
    fn first_update_with_unit_gradient() {
        let mut store = one_param_store(vec![0.0; 3]);
        let mut opt = RmsProp::new(&store, RmsPropConfig::default());
        let mut grads = store.grad_zeros();
        grads.grads[0].data.fill(1.0);
        assert!(opt.update(&mut store, &grads));
        let expect = -1e-4 / ((0.01f64).sqrt() + 1e-8);
        for &p in &store.get(0).data {
            assert!((p - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut store = one_param_store(vec![1.0]);
        let mut opt = RmsProp::new(&store, RmsPropConfig::default());
        let mut grads = store.grad_zeros();
        grads.grads[0].data[0] = f64::NAN;
        assert!(!opt.update(&mut store, &grads));
        assert_eq!(store.get(0).data, vec![1.0]);
        assert_eq!(store.version(), 0);
    }

    #[test]
    fn minimizes_quadratic() {
        // minimize ||p||^2 from a random-ish start
        let mut store = one_param_store(vec![0.7, -1.3, 0.2, 2.1]);
        let mut opt = RmsProp::new(
            &store,
            RmsPropConfig { lr: 1e-2, smoothing: 0.99, eps: 1e-8 },
        );
        for _ in 0..10_000 {
            let mut grads = store.grad_zeros();
            for (g, &p) in grads.grads[0].data.iter_mut().zip(&store.get(0).data) {
                *g = 2.0 * p;
            }
            opt.update(&mut store, &grads);
        }
        // RMSprop's effective step near the optimum approaches lr, so it
        // oscillates within ~lr per coordinate rather than converging to 0.
        let final_sq = store.get(0).sq_norm();
        assert!(final_sq < 4.0 * 4e-4 * 2.0, "final sq norm {final_sq}");
    }
}
