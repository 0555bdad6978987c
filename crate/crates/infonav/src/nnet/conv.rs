//! One-dimensional convolution over ray positions, built as a
//! weight-shared dense layer applied to zero-padded windows. Sharing the
//! kernel across rays keeps the encoder translation-equivariant along the
//! view, which matters for transfer to scenes never seen in training.

use rand_chacha::ChaCha8Rng;

use super::dense::{Activation, DenseCache, DenseLayer};
use super::store::{GradientSet, ParamStore};

#[derive(Clone, Debug)]
pub struct RayConv {
    pub kernel: DenseLayer,
    pub positions: usize,
    pub channels: usize,
    /// Window width; must be odd (same padding).
    pub width: usize,
}

#[derive(Clone, Debug)]
pub struct RayConvCache {
    pub per_pos: Vec<DenseCache>,
}

impl RayConv {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        positions: usize,
        channels: usize,
        width: usize,
        out_channels: usize,
        act: Activation,
        spectral: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(width % 2 == 1, "conv width must be odd");
        let kernel = DenseLayer::new(
            store,
            name,
            width * channels,
            out_channels,
            act,
            spectral,
            rng,
        );
        RayConv {
            kernel,
            positions,
            channels,
            width,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.positions * self.channels
    }

    pub fn out_dim(&self) -> usize {
        self.positions * self.kernel.out_dim
    }

    fn window(&self, x: &[f64], pos: usize) -> Vec<f64> {
        let half = (self.width / 2) as isize;
        let mut patch = Vec::with_capacity(self.width * self.channels);
        for off in -half..=half {
            let p = pos as isize + off;
            if p < 0 || p >= self.positions as isize {
                patch.extend(std::iter::repeat(0.0).take(self.channels));
            } else {
                let base = p as usize * self.channels;
                patch.extend_from_slice(&x[base..base + self.channels]);
            }
        }
        patch
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> (Vec<f64>, RayConvCache) {
        assert_eq!(x.len(), self.in_dim(), "ray conv input size");
        let mut out = Vec::with_capacity(self.out_dim());
        let mut per_pos = Vec::with_capacity(self.positions);
        for pos in 0..self.positions {
            let (o, cache) = self.kernel.forward(store, &self.window(x, pos));
            out.extend_from_slice(&o);
            per_pos.push(cache);
        }
        (out, RayConvCache { per_pos })
    }

    /// Accumulates shared-kernel gradients once per window and returns
    /// dL/dx with overlapping window contributions summed.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &RayConvCache,
        dout: &[f64],
        grads: &mut GradientSet,
    ) -> Vec<f64> {
        assert_eq!(dout.len(), self.out_dim());
        let half = (self.width / 2) as isize;
        let oc = self.kernel.out_dim;
        let mut dx = vec![0.0; self.in_dim()];
        for pos in 0..self.positions {
            let dpatch = self.kernel.backward(
                store,
                &cache.per_pos[pos],
                &dout[pos * oc..(pos + 1) * oc],
                grads,
            );
            for off in -half..=half {
                let p = pos as isize + off;
                if p < 0 || p >= self.positions as isize {
                    continue;
                }
                let src = (off + half) as usize * self.channels;
                let dst = p as usize * self.channels;
                for c in 0..self.channels {
                    dx[dst + c] += dpatch[src + c];
                }
            }
        }
        dx
    }

    pub fn power_iterate(&self, store: &mut ParamStore, iterations: usize) {
        self.kernel.power_iterate(store, iterations);
    }
}
