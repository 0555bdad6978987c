//! Episode rollout for evaluation: model, random, and expert policies.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::navmodel::{ActMode, ControllerState, NavModel};
use crate::nnet::ParamStore;
use crate::world::{
    observe, step, Action, EpisodeState, Pose, TaskRuntime, WorldParams, ACTION_COUNT,
};

pub enum Policy<'a> {
    Model {
        model: &'a NavModel,
        store: &'a ParamStore,
        mode: ActMode,
    },
    Random,
    Expert,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub collisions: usize,
    pub success: bool,
    /// Whether success came from the oracle stop overlay rather than the
    /// policy's own stop.
    pub auto_stopped: bool,
    /// Actions taken.
    pub steps: usize,
    /// Shortest expert path length for the same task (includes the stop).
    pub optimal_len: usize,
    pub start_geodesic: u32,
}

impl Trajectory {
    pub fn reward_sum(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Runs one episode from the task's start pose. With `auto_stop`, the
/// episode instead terminates successfully at the first visit to a
/// success state, so the same action sequence can only improve: a
/// policy-stop success implies the overlay stopped there or earlier.
pub fn run_episode(
    policy: &Policy,
    rt: &TaskRuntime,
    params: &WorldParams,
    auto_stop: bool,
    seed: u64,
) -> Result<Trajectory> {
    let mut ep = EpisodeState::start(&rt.task);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctrl = ControllerState::new(seed);
    let mut obs = observe(&rt.scene, ep.pose, &params.render);

    let mut traj = Trajectory {
        poses: vec![ep.pose],
        actions: Vec::new(),
        rewards: Vec::new(),
        collisions: 0,
        success: false,
        auto_stopped: false,
        steps: 0,
        optimal_len: rt.task.optimal_len,
        start_geodesic: rt.task.start_geodesic,
    };

    if auto_stop && rt.is_success_state(ep.pose, params) {
        traj.success = true;
        traj.auto_stopped = true;
        return Ok(traj);
    }

    while !ep.done {
        let action = match policy {
            Policy::Model { model, store, mode } => {
                model.act(store, &obs, &rt.task.target, &mut ctrl, *mode)
            }
            Policy::Random => Action::from_index(rng.gen_range(0..ACTION_COUNT)),
            Policy::Expert => rt.expert_action(ep.pose)?,
        };
        let res = step(&mut ep, rt, params, action)?;
        traj.actions.push(action);
        traj.rewards.push(res.reward);
        traj.poses.push(ep.pose);
        obs = res.observation;
        if auto_stop && !ep.success && rt.is_success_state(ep.pose, params) {
            ep.success = true;
            ep.done = true;
            traj.auto_stopped = true;
        }
    }

    traj.collisions = ep.collisions;
    traj.success = ep.success;
    traj.steps = traj.actions.len();
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::evalkit::tasks::{sample_tasks, ScenePool, Split, TaskConstraints};
    use crate::world::{generate_scene, RenderParams, SceneSpec};

    fn fixtures() -> (ScenePool, WorldParams) {
        let scenes = (0..2)
            .map(|i| Arc::new(generate_scene(40 + i, i, &SceneSpec::default()).unwrap()))
            .collect();
        (
            ScenePool::new(scenes, RenderParams::default()),
            WorldParams::default(),
        )
    }

    #[test]
    fn expert_always_succeeds_at_optimal_length() {
        let (pool, w) = fixtures();
        let suite = sample_tasks(&pool, Split::Val, 15, 2, &TaskConstraints::default(), &w).unwrap();
        for t in &suite.tasks {
            let rt = pool.runtime(t).unwrap();
            let traj = run_episode(&Policy::Expert, &rt, &w, false, 0).unwrap();
            assert!(traj.success);
            assert_eq!(traj.steps, t.optimal_len);
            assert_eq!(traj.collisions, 0);
        }
    }

    #[test]
    fn random_rarely_succeeds_and_is_seed_deterministic() {
        let (pool, w) = fixtures();
        let suite = sample_tasks(&pool, Split::Val, 10, 4, &TaskConstraints::default(), &w).unwrap();
        let mut successes = 0;
        for (i, t) in suite.tasks.iter().enumerate() {
            let rt = pool.runtime(t).unwrap();
            let a = run_episode(&Policy::Random, &rt, &w, false, i as u64).unwrap();
            let b = run_episode(&Policy::Random, &rt, &w, false, i as u64).unwrap();
            assert_eq!(a.actions, b.actions);
            successes += a.success as usize;
        }
        assert!(successes <= 3, "random policy succeeded {successes}/10");
    }

    #[test]
    fn auto_stop_dominates_plain_run_pairwise() {
        let (pool, w) = fixtures();
        let suite = sample_tasks(&pool, Split::Val, 20, 8, &TaskConstraints::default(), &w).unwrap();
        for (i, t) in suite.tasks.iter().enumerate() {
            let rt = pool.runtime(t).unwrap();
            let plain = run_episode(&Policy::Random, &rt, &w, false, i as u64).unwrap();
            let auto = run_episode(&Policy::Random, &rt, &w, true, i as u64).unwrap();
            assert!(auto.success as u8 >= plain.success as u8);
            assert!(auto.steps <= plain.steps);
        }
    }

    #[test]
    fn expert_with_auto_stop_never_does_worse() {
        let (pool, w) = fixtures();
        let suite = sample_tasks(&pool, Split::Val, 10, 6, &TaskConstraints::default(), &w).unwrap();
        for t in &suite.tasks {
            let rt = pool.runtime(t).unwrap();
            let traj = run_episode(&Policy::Expert, &rt, &w, true, 0).unwrap();
            assert!(traj.success);
            assert!(traj.steps <= t.optimal_len);
        }
    }
}
