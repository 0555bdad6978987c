//! Dense layers with optional LeakyReLU activation and spectral
//! normalization by power iteration.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::store::{GradientSet, ParamId, ParamStore};
use super::tensor::{dot, norm, Tensor};

pub const LEAKY_SLOPE: f64 = 0.1;
const SIGMA_GUARD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    LeakyRelu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::LeakyRelu => {
                if pre >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

/// Affine layer `act(W x / sigma + b)` where `sigma` is 1 for plain layers
/// and the power-iteration estimate of the largest singular value for
/// spectrally normalized ones. The u/v iteration vectors live in the
/// ParamStore as non-trainable entries so they persist across updates and
/// checkpoints.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: ParamId,
    pub b: ParamId,
    pub act: Activation,
    pub sn: Option<SpectralVecs>,
}

#[derive(Clone, Copy, Debug)]
pub struct SpectralVecs {
    pub u: ParamId,
    pub v: ParamId,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    pub x: Vec<f64>,
    /// Raw W x before normalization (needed for the spectral-norm backward).
    pub wx: Vec<f64>,
    pub pre: Vec<f64>,
    pub out: Vec<f64>,
    pub sigma: f64,
}

impl DenseLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        act: Activation,
        spectral: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.add(&format!("{name}.w"), orthogonal(out_dim, in_dim, rng), true);
        let b = store.add(&format!("{name}.b"), Tensor::zeros(out_dim, 1), true);
        let sn = if spectral {
            let u = store.add(&format!("{name}.sn_u"), random_unit(out_dim, rng), false);
            let v = store.add(&format!("{name}.sn_v"), random_unit(in_dim, rng), false);
            Some(SpectralVecs { u, v })
        } else {
            None
        };
        DenseLayer {
            name: name.to_string(),
            in_dim,
            out_dim,
            w,
            b,
            act,
            sn,
        }
    }

    /// sigma = u^T W v with the current iteration vectors; guarded so a
    /// degenerate (near-zero) matrix is left unchanged.
    pub fn sigma(&self, store: &ParamStore) -> f64 {
        match self.sn {
            None => 1.0,
            Some(sv) => {
                let w = store.get(self.w);
                let u = &store.get(sv.u).data;
                let v = &store.get(sv.v).data;
                let wv = w.matvec(v);
                let s = dot(u, &wv);
                if s.abs() < SIGMA_GUARD {
                    1.0
                } else {
                    s
                }
            }
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> (Vec<f64>, DenseCache) {
        assert_eq!(
            x.len(),
            self.in_dim,
            "layer {}: input dim {} != {}",
            self.name,
            x.len(),
            self.in_dim
        );
        let w = store.get(self.w);
        let b = &store.get(self.b).data;
        let wx = w.matvec(x);
        let sigma = self.sigma(store);
        let mut pre = vec![0.0; self.out_dim];
        for i in 0..self.out_dim {
            pre[i] = wx[i] / sigma + b[i];
        }
        let out: Vec<f64> = pre.iter().map(|&p| self.act.apply(p)).collect();
        let cache = DenseCache {
            x: x.to_vec(),
            wx,
            pre,
            out: out.clone(),
            sigma,
        };
        (out, cache)
    }

    /// Accumulates dW/db into `grads` and returns dL/dx. For spectrally
    /// normalized layers the backward treats u,v as constants and
    /// differentiates through sigma = u^T W v exactly.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &DenseCache,
        dout: &[f64],
        grads: &mut GradientSet,
    ) -> Vec<f64> {
        let dpre: Vec<f64> = dout
            .iter()
            .zip(&cache.pre)
            .map(|(d, &p)| d * self.act.derivative(p))
            .collect();
        let w = store.get(self.w);
        for (gb, d) in grads.grads[self.b].data.iter_mut().zip(&dpre) {
            *gb += d;
        }
        match self.sn {
            None => {
                grads.grads[self.w].add_outer(&dpre, &cache.x, 1.0);
                w.matvec_t(&dpre)
            }
            Some(sv) => {
                let sigma = cache.sigma;
                grads.grads[self.w].add_outer(&dpre, &cache.x, 1.0 / sigma);
                // d(1/sigma) term: -(dpre . wx)/sigma^2 * u v^T
                let coef = -dot(&dpre, &cache.wx) / (sigma * sigma);
                let u = &store.get(sv.u).data;
                let v = &store.get(sv.v).data;
                grads.grads[self.w].add_outer(u, v, coef);
                let mut dx = w.matvec_t(&dpre);
                for d in &mut dx {
                    *d /= sigma;
                }
                dx
            }
        }
    }

    /// Power iteration: v <- normalize(W^T u), u <- normalize(W v).
    pub fn power_iterate(&self, store: &mut ParamStore, iterations: usize) {
        let Some(sv) = self.sn else { return };
        let w = store.get(self.w).clone();
        let mut u = store.get(sv.u).data.clone();
        let mut v = store.get(sv.v).data.clone();
        for _ in 0..iterations {
            let wt_u = w.matvec_t(&u);
            let n = norm(&wt_u);
            if n < SIGMA_GUARD {
                return;
            }
            v = wt_u.iter().map(|x| x / n).collect();
            let wv = w.matvec(&v);
            let n = norm(&wv);
            if n < SIGMA_GUARD {
                return;
            }
            u = wv.iter().map(|x| x / n).collect();
        }
        store.get_mut(sv.u).data = u;
        store.get_mut(sv.v).data = v;
    }
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
    let n = norm(&v).max(1e-12);
    for x in &mut v {
        *x /= n;
    }
    Tensor::vector(v)
}

/// Orthogonal initialization via modified Gram-Schmidt on the shorter side.
pub fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let (m, transpose) = if rows <= cols {
        (gram_schmidt(rows, cols, rng), false)
    } else {
        (gram_schmidt(cols, rows, rng), true)
    };
    if !transpose {
        m
    } else {
        let mut t = Tensor::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                *t.at_mut(r, c) = m.at(c, r);
            }
        }
        t
    }
}

fn gram_schmidt(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    debug_assert!(rows <= cols);
    let mut m = Tensor::zeros(rows, cols);
    for v in &mut m.data {
        *v = standard_normal(rng);
    }
    for r in 0..rows {
        for prev in 0..r {
            let p: Vec<f64> = (0..cols).map(|c| m.at(prev, c)).collect();
            let cur: Vec<f64> = (0..cols).map(|c| m.at(r, c)).collect();
            let proj = dot(&p, &cur);
            for c in 0..cols {
                *m.at_mut(r, c) -= proj * p[c];
            }
        }
        let cur: Vec<f64> = (0..cols).map(|c| m.at(r, c)).collect();
        let n = norm(&cur).max(1e-12);
        for c in 0..cols {
            *m.at_mut(r, c) /= n;
        }
    }
    m
}

/// Box-Muller standard normal draw.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn identity_layer_passes_positive_input_through() {
        let mut store = ParamStore::new();
        let mut r = rng();
        let layer = DenseLayer::new(&mut store, "id", 3, 3, Activation::LeakyRelu, false, &mut r);
        let w = store.get_mut(layer.w);
        w.data.copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let (out, _) = layer.forward(&store, &[0.5, 2.0, 3.0]);
        assert_eq!(out, vec![0.5, 2.0, 3.0]);
    }

    #[test]
    fn leaky_relu_negative_preactivation() {
        assert_eq!(Activation::LeakyRelu.apply(-1.0), -0.1);
    }

    #[test]
    fn spectral_norm_scales_diagonal() {
        let mut store = ParamStore::new();
        let mut r = rng();
        let layer = DenseLayer::new(&mut store, "sn", 3, 3, Activation::Linear, true, &mut r);
        let w = store.get_mut(layer.w);
        w.data.copy_from_slice(&[3.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 3.0]);
        layer.power_iterate(&mut store, 50);
        let sigma = layer.sigma(&store);
        assert!((sigma - 3.0).abs() < 1e-9, "sigma = {sigma}");
        let (out, _) = layer.forward(&store, &[1.0, 2.0, -1.0]);
        assert!((out[0] - 1.0).abs() < 1e-9);
        assert!((out[1] - 2.0).abs() < 1e-9);
        assert!((out[2] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_matrix_sigma_guard() {
        let mut store = ParamStore::new();
        let mut r = rng();
        let layer = DenseLayer::new(&mut store, "z", 4, 2, Activation::Linear, true, &mut r);
        store.get_mut(layer.w).data.fill(0.0);
        layer.power_iterate(&mut store, 5);
        assert_eq!(layer.sigma(&store), 1.0);
        let (out, _) = layer.forward(&store, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut r = rng();
        let m = orthogonal(4, 8, &mut r);
        for i in 0..4 {
            let ri: Vec<f64> = (0..8).map(|c| m.at(i, c)).collect();
            assert!((dot(&ri, &ri) - 1.0).abs() < 1e-9);
            for j in 0..i {
                let rj: Vec<f64> = (0..8).map(|c| m.at(j, c)).collect();
                assert!(dot(&ri, &rj).abs() < 1e-9);
            }
        }
    }
}
