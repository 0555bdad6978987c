//! Softmax, cross-entropy, and entropy with their logit gradients.

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// -log softmax(logits)[target].
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> f64 {
    assert!(target < logits.len(), "target index out of range");
    -log_softmax(logits)[target]
}

/// Gradient of the cross-entropy w.r.t. logits: softmax - one_hot, scaled.
pub fn cross_entropy_backward(logits: &[f64], target: usize, scale: f64, dlogits: &mut [f64]) {
    let p = softmax(logits);
    for (i, (d, pi)) in dlogits.iter_mut().zip(&p).enumerate() {
        let t = if i == target { 1.0 } else { 0.0 };
        *d += scale * (pi - t);
    }
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Accumulates scale * dH/dlogits where H is the softmax entropy:
/// dH/dl_j = -p_j (ln p_j + H).
pub fn entropy_backward(logits: &[f64], scale: f64, dlogits: &mut [f64]) {
    let p = softmax(logits);
    let h = entropy(&p);
    for (d, &pi) in dlogits.iter_mut().zip(&p) {
        *d += scale * (-pi * (pi.max(1e-300).ln() + h));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_n() {
        let ce = softmax_cross_entropy(&[0.0; 7], 3);
        assert!((ce - (7.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn large_target_logit_approaches_zero_loss() {
        let mut logits = [0.0; 7];
        logits[2] = 60.0;
        assert!(softmax_cross_entropy(&logits, 2) < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[3.0, -1.0, 0.5, 2.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ce_gradient_is_softmax_minus_onehot() {
        let logits = [0.2, -0.4, 1.1];
        let mut d = [0.0; 3];
        cross_entropy_backward(&logits, 1, 1.0, &mut d);
        let p = softmax(&logits);
        assert!((d[0] - p[0]).abs() < 1e-12);
        assert!((d[1] - (p[1] - 1.0)).abs() < 1e-12);
        assert!((d[2] - p[2]).abs() < 1e-12);
    }
}
