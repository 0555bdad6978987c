//! Central finite-difference verification of analytic gradients.
//!
//! Each probe compares the analytic derivative against central differences
//! at several step sizes and keeps the best agreement; the smaller steps
//! rule out probes whose +/-h interval straddles a LeakyReLU kink, where a
//! central difference is not a valid derivative estimate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::store::{GradientSet, ParamStore};

const STEPS: [f64; 5] = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
/// Scale floor in the relative-error denominator.
const REL_FLOOR: f64 = 1e-2;

#[derive(Clone, Debug)]
pub struct GroupCheck {
    pub name: String,
    pub probes: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err() < tol
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Probes `probes_per_group` random coordinates of every trainable group,
/// comparing `analytic` against central differences of `loss_fn`. The loss
/// must be deterministic given the store (fixed noise).
pub fn grad_check<F>(
    store: &mut ParamStore,
    analytic: &GradientSet,
    mut loss_fn: F,
    probes_per_group: usize,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::new();
    for id in 0..store.len() {
        let def = store.defs()[id].clone();
        if !def.trainable {
            continue;
        }
        let n_coords = def.rows * def.cols;
        let mut max_err: f64 = 0.0;
        for _ in 0..probes_per_group {
            let k = rng.gen_range(0..n_coords);
            let a = analytic.grads[id].data[k];
            let orig = store.get(id).data[k];
            let mut best = f64::INFINITY;
            for &h in &STEPS {
                store.get_mut(id).data[k] = orig + h;
                let f_plus = loss_fn(store);
                store.get_mut(id).data[k] = orig - h;
                let f_minus = loss_fn(store);
                store.get_mut(id).data[k] = orig;
                let numeric = (f_plus - f_minus) / (2.0 * h);
                best = best.min(rel_err(a, numeric));
                if best < 1e-6 {
                    break;
                }
            }
            max_err = max_err.max(best);
        }
        groups.push(GroupCheck {
            name: def.name,
            probes: probes_per_group,
            max_rel_err: max_err,
        });
    }
    GradCheckReport { groups }
}
