//! Aggregate navigation metrics: success rate, SPL, collision rate, and
//! per-difficulty breakdowns.

use serde::{Deserialize, Serialize};

use super::runner::Trajectory;

/// Geodesic-distance histogram bin [lo, hi) in cells; `hi = None` is the
/// overflow bin.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BinStat {
    pub lo: u32,
    pub hi: Option<u32>,
    pub n: usize,
    pub sr: f64,
    pub spl: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SubsetStats {
    pub n: usize,
    pub sr: f64,
    pub spl: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    /// Success rate, percent.
    pub sr: f64,
    /// Success weighted by path length, percent.
    pub spl: f64,
    /// Episodes with at least one collision, percent.
    pub cr: f64,
    pub mean_steps: f64,
    pub mean_reward: f64,
    pub bins: Vec<BinStat>,
    /// Tasks with optimal length >= 5 actions.
    pub long_tasks: SubsetStats,
}

const BIN_WIDTH: u32 = 2;
const BIN_MAX: u32 = 20;

fn spl_term(t: &Trajectory) -> f64 {
    if !t.success {
        return 0.0;
    }
    t.optimal_len as f64 / (t.steps.max(t.optimal_len).max(1)) as f64
}

fn sr_spl(trajs: &[&Trajectory]) -> (f64, f64) {
    if trajs.is_empty() {
        return (0.0, 0.0);
    }
    let n = trajs.len() as f64;
    let sr = trajs.iter().filter(|t| t.success).count() as f64 / n;
    let spl = trajs.iter().map(|t| spl_term(t)).sum::<f64>() / n;
    (100.0 * sr, 100.0 * spl)
}

pub fn compute_metrics(trajs: &[Trajectory]) -> EvalReport {
    let all: Vec<&Trajectory> = trajs.iter().collect();
    let (sr, spl) = sr_spl(&all);
    let n = trajs.len();
    let cr = if n == 0 {
        0.0
    } else {
        100.0 * trajs.iter().filter(|t| t.collisions > 0).count() as f64 / n as f64
    };

    let mut bins = Vec::new();
    let mut lo = 0;
    while lo < BIN_MAX {
        let hi = lo + BIN_WIDTH;
        let members: Vec<&Trajectory> = trajs
            .iter()
            .filter(|t| t.start_geodesic >= lo && t.start_geodesic < hi)
            .collect();
        let (bsr, bspl) = sr_spl(&members);
        bins.push(BinStat {
            lo,
            hi: Some(hi),
            n: members.len(),
            sr: bsr,
            spl: bspl,
        });
        lo = hi;
    }
    let overflow: Vec<&Trajectory> = trajs.iter().filter(|t| t.start_geodesic >= BIN_MAX).collect();
    let (osr, ospl) = sr_spl(&overflow);
    bins.push(BinStat {
        lo: BIN_MAX,
        hi: None,
        n: overflow.len(),
        sr: osr,
        spl: ospl,
    });

    let long: Vec<&Trajectory> = trajs.iter().filter(|t| t.optimal_len >= 5).collect();
    let (lsr, lspl) = sr_spl(&long);

    EvalReport {
        n,
        sr,
        spl,
        cr,
        mean_steps: if n == 0 {
            0.0
        } else {
            trajs.iter().map(|t| t.steps as f64).sum::<f64>() / n as f64
        },
        mean_reward: if n == 0 {
            0.0
        } else {
            trajs.iter().map(|t| t.reward_sum()).sum::<f64>() / n as f64
        },
        bins,
        long_tasks: SubsetStats {
            n: long.len(),
            sr: lsr,
            spl: lspl,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Action, Pose};

    fn traj(success: bool, steps: usize, optimal: usize, geo: u32, collisions: usize) -> Trajectory {
        Trajectory {
            poses: vec![Pose {
                x: 1,
                y: 1,
                heading: 0,
            }],
            actions: vec![Action::Stop; steps],
            rewards: vec![0.0; steps],
            collisions,
            success,
            auto_stopped: false,
            steps,
            optimal_len: optimal,
            start_geodesic: geo,
        }
    }

    #[test]
    fn spl_never_exceeds_sr() {
        let trajs = vec![
            traj(true, 12, 6, 5, 0),
            traj(true, 6, 6, 5, 1),
            traj(false, 30, 8, 7, 2),
            traj(true, 9, 4, 3, 0),
        ];
        let r = compute_metrics(&trajs);
        assert!(r.spl <= r.sr + 1e-12);
        assert!((r.sr - 75.0).abs() < 1e-9);
        assert!((r.cr - 50.0).abs() < 1e-9);
    }

    #[test]
    fn optimal_length_run_gets_full_spl_credit() {
        let r = compute_metrics(&[traj(true, 7, 7, 6, 0)]);
        assert!((r.spl - 100.0).abs() < 1e-12);
        assert!((r.sr - 100.0).abs() < 1e-12);
    }

    #[test]
    fn faster_than_optimal_is_capped_at_one() {
        // Oracle-stop runs can beat the stop-inclusive optimal length.
        let r = compute_metrics(&[traj(true, 5, 6, 6, 0)]);
        assert!((r.spl - 100.0).abs() < 1e-12);
    }

    #[test]
    fn bins_partition_all_tasks() {
        let trajs: Vec<Trajectory> = (0..30)
            .map(|i| traj(i % 2 == 0, 10, 5, i as u32, 0))
            .collect();
        let r = compute_metrics(&trajs);
        assert_eq!(r.bins.len(), 11);
        assert_eq!(r.bins.iter().map(|b| b.n).sum::<usize>(), 30);
        assert_eq!(r.bins.last().unwrap().hi, None);
        assert_eq!(r.bins.last().unwrap().n, 10);
    }

    #[test]
    fn long_task_subset_counts_only_len_ge_5() {
        let trajs = vec![
            traj(true, 4, 4, 3, 0),
            traj(true, 5, 5, 4, 0),
            traj(false, 8, 9, 8, 0),
        ];
        let r = compute_metrics(&trajs);
        assert_eq!(r.long_tasks.n, 2);
        assert!((r.long_tasks.sr - 50.0).abs() < 1e-9);
    }

    #[test]
    fn empty_input_is_all_zero() {
        let r = compute_metrics(&[]);
        assert_eq!(r.n, 0);
        assert_eq!(r.sr, 0.0);
        assert_eq!(r.spl, 0.0);
    }
}
