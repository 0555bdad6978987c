//! Exact conditional mutual information on tabular dynamics, and the
//! variational lower bound it certifies.
//!
//! I(a; x'|x) = H(a|x) - H(a|x', x) with a ~ Cat(1/C) independent of x.
//! The bound evaluates E[log2 q(a|x,x')] + log2 C for a supplied
//! classifier; with the Bayes-optimal classifier it meets the exact value.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NavError, Result};
use crate::world::ACTION_COUNT;

const LOG_EPS: f64 = 1e-12;

/// Finite-state transition model p(x'|x,a), actions uniform Cat(1/C),
/// states weighted uniformly.
#[derive(Clone, Debug)]
pub struct TabularDynamics {
    pub n_states: usize,
    pub n_next: usize,
    /// probs[x][a][x'], each row over x' sums to 1.
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl TabularDynamics {
    pub fn validate(&self) -> Result<()> {
        if self.probs.len() != self.n_states {
            return Err(NavError::Contract("dynamics state count mismatch".into()));
        }
        for rows in &self.probs {
            if rows.len() != ACTION_COUNT {
                return Err(NavError::Contract("dynamics action count mismatch".into()));
            }
            for row in rows {
                if row.len() != self.n_next {
                    return Err(NavError::Contract("dynamics next-state count mismatch".into()));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                    return Err(NavError::Contract(format!(
                        "dynamics row not a distribution (sum {s})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Marginal p(x'|x) under uniform actions.
    pub fn next_marginal(&self, x: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.n_next];
        for row in &self.probs[x] {
            for (mi, p) in m.iter_mut().zip(row) {
                *mi += p / ACTION_COUNT as f64;
            }
        }
        m
    }

    /// Deterministic dynamics where each action maps to its own next state.
    pub fn injective(n_states: usize) -> TabularDynamics {
        let probs = (0..n_states)
            .map(|_| {
                (0..ACTION_COUNT)
                    .map(|a| {
                        let mut row = vec![0.0; ACTION_COUNT];
                        row[a] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect();
        TabularDynamics {
            n_states,
            n_next: ACTION_COUNT,
            probs,
        }
    }

    /// Every action leads to the same next state: zero information.
    pub fn constant(n_states: usize) -> TabularDynamics {
        let probs = (0..n_states)
            .map(|_| (0..ACTION_COUNT).map(|_| vec![1.0]).collect())
            .collect();
        TabularDynamics {
            n_states,
            n_next: 1,
            probs,
        }
    }

    pub fn random(n_states: usize, n_next: usize, rng: &mut ChaCha8Rng) -> TabularDynamics {
        let probs = (0..n_states)
            .map(|_| {
                (0..ACTION_COUNT)
                    .map(|_| {
                        let mut row: Vec<f64> = (0..n_next).map(|_| rng.gen_range(0.01..1.0)).collect();
                        let s: f64 = row.iter().sum();
                        for p in &mut row {
                            *p /= s;
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        TabularDynamics {
            n_states,
            n_next,
            probs,
        }
    }
}

/// Action classifier q(a|x,x'): rows over a sum to 1.
#[derive(Clone, Debug)]
pub struct Classifier {
    /// q[x][x'][a]
    pub q: Vec<Vec<Vec<f64>>>,
}

impl Classifier {
    pub fn validate(&self, dynamics: &TabularDynamics) -> Result<()> {
        if self.q.len() != dynamics.n_states {
            return Err(NavError::Contract("classifier state count mismatch".into()));
        }
        for per_x in &self.q {
            if per_x.len() != dynamics.n_next {
                return Err(NavError::Contract("classifier next-state count mismatch".into()));
            }
            for row in per_x {
                let s: f64 = row.iter().sum();
                if row.len() != ACTION_COUNT || (s - 1.0).abs() > 1e-9 {
                    return Err(NavError::Contract("classifier row not a distribution".into()));
                }
            }
        }
        Ok(())
    }

    pub fn uniform(dynamics: &TabularDynamics) -> Classifier {
        let row = vec![1.0 / ACTION_COUNT as f64; ACTION_COUNT];
        Classifier {
            q: vec![vec![row; dynamics.n_next]; dynamics.n_states],
        }
    }

    /// Bayes-optimal posterior q(a|x,x') = p(x'|x,a) p(a) / p(x'|x).
    pub fn bayes(dynamics: &TabularDynamics) -> Classifier {
        let pa = 1.0 / ACTION_COUNT as f64;
        let q = (0..dynamics.n_states)
            .map(|x| {
                let marg = dynamics.next_marginal(x);
                (0..dynamics.n_next)
                    .map(|xn| {
                        if marg[xn] <= 0.0 {
                            return vec![pa; ACTION_COUNT];
                        }
                        (0..ACTION_COUNT)
                            .map(|a| dynamics.probs[x][a][xn] * pa / marg[xn])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Classifier { q }
    }
}

/// Exact I(a; x'|x) in bits by enumeration, states weighted uniformly.
pub fn mi_exact(dynamics: &TabularDynamics) -> Result<f64> {
    dynamics.validate()?;
    let pa = 1.0 / ACTION_COUNT as f64;
    let px = 1.0 / dynamics.n_states as f64;
    let mut acc = 0.0;
    for x in 0..dynamics.n_states {
        let marg = dynamics.next_marginal(x);
        for a in 0..ACTION_COUNT {
            for xn in 0..dynamics.n_next {
                let p = dynamics.probs[x][a][xn];
                if p > 0.0 {
                    acc += px * pa * p * (p / marg[xn]).log2();
                }
            }
        }
    }
    Ok(acc)
}

/// Variational lower bound E[log2 q(a|x,x')] + log2 C in bits, under the
/// same sampling order (uniform x, uniform a, then x' from the dynamics).
/// Zero classifier probabilities are floored at 1e-12 (a loud warning is
/// printed, as a hard zero costs the bound ~40 bits).
pub fn mi_bound(dynamics: &TabularDynamics, classifier: &Classifier) -> Result<f64> {
    dynamics.validate()?;
    classifier.validate(dynamics)?;
    let pa = 1.0 / ACTION_COUNT as f64;
    let px = 1.0 / dynamics.n_states as f64;
    let mut acc = 0.0;
    let mut floored = false;
    for x in 0..dynamics.n_states {
        for a in 0..ACTION_COUNT {
            for xn in 0..dynamics.n_next {
                let p = dynamics.probs[x][a][xn];
                if p <= 0.0 {
                    continue;
                }
                let qv = classifier.q[x][xn][a];
                if qv < LOG_EPS {
                    floored = true;
                }
                acc += px * pa * p * qv.max(LOG_EPS).log2();
            }
        }
    }
    if floored {
        eprintln!("warning: classifier probability floored at {LOG_EPS} inside mi_bound");
    }
    Ok(acc + (ACTION_COUNT as f64).log2())
}

/// One row of the MI verification sweep.
#[derive(Clone, Debug, serde::Serialize)]
pub struct MiRow {
    pub instance: String,
    pub exact_bits: f64,
    pub bound_bits: f64,
    pub gap_bits: f64,
}

/// Canonical cases plus `n` random instances, each checked with the
/// Bayes-optimal classifier.
pub fn mi_sweep(n: usize, seed: u64) -> Result<Vec<MiRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances: Vec<(String, TabularDynamics)> = vec![
        ("injective".into(), TabularDynamics::injective(3)),
        ("constant".into(), TabularDynamics::constant(3)),
    ];
    for i in 0..n {
        let n_states = rng.gen_range(2..5);
        let n_next = rng.gen_range(2..9);
        instances.push((
            format!("random_{i}"),
            TabularDynamics::random(n_states, n_next, &mut rng),
        ));
    }
    instances
        .into_iter()
        .map(|(name, dynamics)| {
            let exact = mi_exact(&dynamics)?;
            let bound = mi_bound(&dynamics, &Classifier::bayes(&dynamics))?;
            Ok(MiRow {
                instance: name,
                exact_bits: exact,
                bound_bits: bound,
                gap_bits: exact - bound,
            })
        })
        .collect()
}
