//! Diagonal-Gaussian reparameterization and closed-form KL divergence.

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// Mean and log-variance of a diagonal Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
}

impl GaussianParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standard(dim: usize) -> Self {
        GaussianParams {
            mean: vec![0.0; dim],
            logvar: vec![0.0; dim],
        }
    }
}

/// Clamps raw log-variances to [-10, 10]; the mask marks coordinates that
/// stayed inside (gradient 1) vs clamped (gradient 0).
pub fn clamp_logvar(raw: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let mut out = Vec::with_capacity(raw.len());
    let mut inside = Vec::with_capacity(raw.len());
    for &v in raw {
        if v < LOGVAR_MIN {
            out.push(LOGVAR_MIN);
            inside.push(false);
        } else if v > LOGVAR_MAX {
            out.push(LOGVAR_MAX);
            inside.push(false);
        } else {
            out.push(v);
            inside.push(true);
        }
    }
    (out, inside)
}

/// z = mu + exp(logvar/2) * noise.
pub fn gaussian_sample(g: &GaussianParams, noise: &[f64]) -> Vec<f64> {
    assert_eq!(g.dim(), noise.len(), "noise dimension mismatch");
    g.mean
        .iter()
        .zip(&g.logvar)
        .zip(noise)
        .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
        .collect()
}

/// Backward of the reparameterized sample: given dL/dz, accumulates
/// dL/dmu and dL/dlogvar.
pub fn sample_backward(
    g: &GaussianParams,
    noise: &[f64],
    dz: &[f64],
    dmean: &mut [f64],
    dlogvar: &mut [f64],
) {
    for i in 0..g.dim() {
        dmean[i] += dz[i];
        dlogvar[i] += dz[i] * noise[i] * 0.5 * (0.5 * g.logvar[i]).exp();
    }
}

/// KL(q || p) for diagonal Gaussians, summed over dimensions.
pub fn gaussian_kl(q: &GaussianParams, p: &GaussianParams) -> f64 {
    assert_eq!(q.dim(), p.dim(), "KL dimension mismatch");
    let mut acc = 0.0;
    for i in 0..q.dim() {
        let vq = q.logvar[i].exp();
        let vp = p.logvar[i].exp();
        let dm = q.mean[i] - p.mean[i];
        acc += 0.5 * (p.logvar[i] - q.logvar[i] + (vq + dm * dm) / vp - 1.0);
    }
    acc
}

/// Accumulates scale * dKL into the four gradient slices.
pub fn kl_backward(
    q: &GaussianParams,
    p: &GaussianParams,
    scale: f64,
    dmean_q: &mut [f64],
    dlogvar_q: &mut [f64],
    dmean_p: &mut [f64],
    dlogvar_p: &mut [f64],
) {
    for i in 0..q.dim() {
        let vq = q.logvar[i].exp();
        let vp = p.logvar[i].exp();
        let dm = q.mean[i] - p.mean[i];
        dmean_q[i] += scale * dm / vp;
        dmean_p[i] -= scale * dm / vp;
        dlogvar_q[i] += scale * 0.5 * (vq / vp - 1.0);
        dlogvar_p[i] += scale * 0.5 * (1.0 - (vq + dm * dm) / vp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_with_zero_noise_is_mean() {
        let g = GaussianParams {
            mean: vec![1.0, -2.0, 0.5],
            logvar: vec![0.3, -1.0, 2.0],
        };
        assert_eq!(gaussian_sample(&g, &[0.0; 3]), g.mean);
    }

    #[test]
    fn unit_variance_basis_noise_shifts_mean() {
        let g = GaussianParams {
            mean: vec![1.0, 2.0],
            logvar: vec![0.0, 0.0],
        };
        assert_eq!(gaussian_sample(&g, &[1.0, 0.0]), vec![2.0, 2.0]);
    }

    #[test]
    fn kl_identical_is_zero() {
        let g = GaussianParams {
            mean: vec![0.4, -0.7],
            logvar: vec![0.2, -0.3],
        };
        assert!(gaussian_kl(&g, &g).abs() < 1e-12);
    }

    #[test]
    fn kl_unit_vs_standard_is_half_sq_norm() {
        let q = GaussianParams {
            mean: vec![1.0, 2.0, -1.0],
            logvar: vec![0.0; 3],
        };
        let p = GaussianParams::standard(3);
        let expect = (1.0 + 4.0 + 1.0) / 2.0;
        assert!((gaussian_kl(&q, &p) - expect).abs() < 1e-12);
    }

    #[test]
    fn clamp_masks_out_of_range() {
        let (v, mask) = clamp_logvar(&[-20.0, 0.0, 15.0]);
        assert_eq!(v, vec![-10.0, 0.0, 10.0]);
        assert_eq!(mask, vec![false, true, false]);
    }
}
