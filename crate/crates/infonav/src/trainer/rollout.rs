//! Per-worker environments, rollout collection, and return computation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::evalkit::{sample_tasks, ScenePool, Split, TaskConstraints};
use crate::navmodel::{ActMode, ControllerState, NavModel, StepInput};
use crate::nnet::dense::standard_normal;
use crate::nnet::ParamStore;
use crate::world::{observe, step, Action, EpisodeState, Observation, TaskRuntime, WorldParams};

/// One transition with everything an update needs: the loss inputs, the
/// raw reward, and the episode boundary flag.
#[derive(Debug)]
pub struct RolloutStep {
    pub input: StepInput,
    pub reward: f64,
    pub done: bool,
    pub geodesic: u32,
}

struct ActiveEpisode {
    rt: TaskRuntime,
    ep: EpisodeState,
    obs: Observation,
    ret: f64,
}

/// A worker's sampling state: its RNG streams, the episode in flight, and
/// counters. The parameter store is passed in per rollout so workers can
/// run against any snapshot.
pub struct WorkerEnv {
    pub rng: ChaCha8Rng,
    ctrl: ControllerState,
    active: Option<ActiveEpisode>,
    pub episodes_finished: usize,
    /// Returns (undiscounted reward sums) of episodes finished so far.
    pub finished_returns: Vec<f64>,
    constraints: TaskConstraints,
    world: WorldParams,
}

impl WorkerEnv {
    pub fn new(seed: u64, constraints: TaskConstraints, world: WorldParams) -> WorkerEnv {
        WorkerEnv {
            rng: ChaCha8Rng::seed_from_u64(seed),
            ctrl: ControllerState::new(seed.wrapping_add(0x9e37_79b9)),
            active: None,
            episodes_finished: 0,
            finished_returns: Vec::new(),
            constraints,
            world,
        }
    }

    fn ensure_episode(&mut self, pool: &ScenePool) -> Result<()> {
        if self.active.is_none() {
            let suite = sample_tasks(
                pool,
                Split::Train,
                1,
                self.rng.gen(),
                &self.constraints,
                &self.world,
            )?;
            let rt = pool.runtime(&suite.tasks[0])?;
            let ep = EpisodeState::start(&rt.task);
            let obs = observe(&rt.scene, ep.pose, &self.world.render);
            self.ctrl.reset();
            self.active = Some(ActiveEpisode {
                rt,
                ep,
                obs,
                ret: 0.0,
            });
        }
        Ok(())
    }
}

/// Collects up to `horizon` transitions with the stochastic policy,
/// stopping early at episode boundaries. Returns the steps and the
/// bootstrap value (0 when the rollout ended at a terminal state).
pub fn collect_rollout(
    model: &NavModel,
    store: &ParamStore,
    env: &mut WorkerEnv,
    pool: &ScenePool,
    horizon: usize,
) -> Result<(Vec<RolloutStep>, f64)> {
    let cfg = &model.cfg;
    let mut steps = Vec::with_capacity(horizon);
    env.ensure_episode(pool)?;

    for _ in 0..horizon {
        let (views, target, expert_action, recon_target) = {
            let active = env.active.as_ref().unwrap();
            let views = model.observation_features(&active.obs);
            let target = model.target_features(&active.rt.task.target);
            let (expert_action, recon_target) = if cfg.variant.uses_expert() {
                let (a_gt, x_next_gt) = active.rt.expert_tuple(active.ep.pose, &env.world)?;
                let recon = cfg.variant.has_generation().then(|| {
                    model.encode_state(store, &x_next_gt.front().features(cfg.classes))
                });
                (Some(a_gt.index()), recon)
            } else {
                (None, None)
            };
            (views, target, expert_action, recon_target)
        };

        let noise: Vec<f64> = if cfg.variant.has_latent() {
            (0..cfg.d_z).map(|_| standard_normal(&mut env.rng)).collect()
        } else {
            Vec::new()
        };
        let prev_action = env.ctrl.prev;

        let active = env.active.as_mut().unwrap();
        let action = model.act(
            store,
            &active.obs,
            &active.rt.task.target,
            &mut env.ctrl,
            ActMode::Sample,
        );
        let res = step(&mut active.ep, &active.rt, &env.world, action)?;
        active.obs = res.observation;
        active.ret += res.reward;

        steps.push(RolloutStep {
            input: StepInput {
                views,
                target,
                prev_action,
                chosen_action: action.index(),
                expert_action,
                recon_target,
                return_target: 0.0,
                noise,
            },
            reward: res.reward,
            done: res.done,
            geodesic: res.geodesic_after,
        });

        if res.done {
            let finished = env.active.take().unwrap();
            env.episodes_finished += 1;
            env.finished_returns.push(finished.ret);
            break;
        }
    }

    let bootstrap = match &env.active {
        None => 0.0,
        Some(active) => {
            let views = model.observation_features(&active.obs);
            let target = model.target_features(&active.rt.task.target);
            model.value_estimate(store, &views, &target, env.ctrl.prev, &mut env.rng)
        }
    };
    Ok((steps, bootstrap))
}

/// Fills `return_target` with the discounted return
/// R_t = sum_i tau^i r_{t+i} + tau^{T-t+1} v_bootstrap, resetting across
/// episode boundaries.
pub fn compute_returns(steps: &mut [RolloutStep], bootstrap: f64, tau: f64) {
    let mut r = bootstrap;
    for s in steps.iter_mut().rev() {
        if s.done {
            r = 0.0;
        }
        r = s.reward + tau * r;
        s.input.return_target = r;
    }
}

/// Sampling behavior for expert-replay rollouts used in tests.
pub fn replay_expert(rt: &TaskRuntime, world: &WorldParams) -> Result<Vec<(Action, f64)>> {
    let mut ep = EpisodeState::start(&rt.task);
    let mut out = Vec::new();
    while !ep.done {
        let a = rt.expert_action(ep.pose)?;
        let res = step(&mut ep, rt, world, a)?;
        out.push((a, res.reward));
    }
    Ok(out)
}
