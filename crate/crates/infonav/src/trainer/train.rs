//! The training loop: synchronized rounds of one unroll per worker,
//! aggregated gradient updates, curriculum staging, periodic validation,
//! and best-checkpoint retention.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::evalkit::{
    compute_metrics, run_episode, sample_tasks, Policy, ScenePool, Split, TaskConstraints,
    TaskSuite, Trajectory,
};
use crate::navmodel::{ActMode, LossBreakdown, NavModel, Variant};
use crate::nnet::{Checkpoint, GradientSet, ParamStore, RmsProp, RngState};
use crate::world::Scene;

use super::config::TrainConfig;
use super::rollout::{collect_rollout, compute_returns, WorkerEnv};

/// Salt mixed into the validation-suite seed so it never collides with the
/// worker task streams.
const VAL_SEED_SALT: u64 = 0x5eed_0421;

/// One train_log.jsonl record (one applied or skipped update).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub update: usize,
    pub episodes: usize,
    pub e1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e3: Option<f64>,
    pub l_v: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub applied: bool,
    /// Mean undiscounted return over episodes finished since the last
    /// record (None when no episode finished).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_return: Option<f64>,
}

/// One val_log.jsonl record.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ValRecord {
    pub episodes: usize,
    pub sr: f64,
    pub spl: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub episodes: usize,
    pub updates: usize,
    pub best: ValRecord,
    pub best_checkpoint: PathBuf,
    pub val_log: Vec<ValRecord>,
}

/// Difficulty-ordered curriculum pools: stage k samples from the first k
/// quartile groups. With the curriculum disabled there is a single stage
/// holding every scene.
pub fn build_stage_pools(
    scenes: &[Arc<Scene>],
    cfg: &TrainConfig,
) -> Vec<Arc<ScenePool>> {
    if !cfg.curriculum || scenes.len() < 4 {
        return vec![Arc::new(ScenePool::new(
            scenes.to_vec(),
            cfg.world.render,
        ))];
    }
    let mut ordered: Vec<Arc<Scene>> = scenes.to_vec();
    ordered.sort_by_key(|s| {
        let walls = (0..s.height as i32)
            .flat_map(|y| (0..s.width as i32).map(move |x| (x, y)))
            .filter(|&(x, y)| s.is_wall(x, y))
            .count();
        (s.width * s.height, walls, s.id)
    });
    let q = ordered.len().div_ceil(4);
    (1..=4)
        .map(|k| {
            let take = (k * q).min(ordered.len());
            Arc::new(ScenePool::new(ordered[..take].to_vec(), cfg.world.render))
        })
        .collect()
}

fn active_stage(cfg: &TrainConfig, stages: usize, episodes: usize) -> usize {
    if stages == 1 {
        return 0;
    }
    cfg.stage_schedule
        .iter()
        .take(stages)
        .filter(|&&threshold| episodes >= threshold)
        .count()
        .saturating_sub(1)
}

struct WorkerResult {
    grads: GradientSet,
    losses: LossBreakdown,
    steps: usize,
}

fn worker_round(
    model: &NavModel,
    store: &ParamStore,
    env: &mut WorkerEnv,
    pool: &ScenePool,
    cfg: &TrainConfig,
) -> Result<WorkerResult> {
    let (mut steps, bootstrap) = collect_rollout(model, store, env, pool, cfg.unroll)?;
    compute_returns(&mut steps, bootstrap, cfg.weights.tau);
    let mut grads = store.grad_zeros();
    let mut losses = LossBreakdown::default();
    for s in &steps {
        let (l, trace) = model.training_losses(store, &s.input, &cfg.weights)?;
        model.backward(store, &trace, &cfg.weights, &mut grads, 1.0);
        losses.add(&l);
    }
    Ok(WorkerResult {
        grads,
        losses,
        steps: steps.len(),
    })
}

/// Evaluates the greedy policy on a fixed suite; deterministic per seed.
pub fn validate(
    model: &NavModel,
    store: &ParamStore,
    pool: &ScenePool,
    suite: &TaskSuite,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let mut trajs: Vec<Trajectory> = Vec::with_capacity(suite.tasks.len());
    for (i, task) in suite.tasks.iter().enumerate() {
        let rt = pool.runtime(task)?;
        let policy = Policy::Model {
            model,
            store,
            mode: ActMode::Greedy,
        };
        trajs.push(run_episode(
            &policy,
            &rt,
            &cfg.world,
            false,
            cfg.seed ^ (i as u64).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95),
        )?);
    }
    let report = compute_metrics(&trajs);
    Ok((report.sr, report.spl))
}

fn make_checkpoint(model: &NavModel, store: &ParamStore, cfg: &TrainConfig) -> Checkpoint {
    Checkpoint {
        model_config: serde_json::to_value(model.cfg).expect("model config serializes"),
        store: store.clone(),
        optimizer: cfg.optimizer,
        opt_state: None,
        rng: RngState::capture(&ChaCha8Rng::seed_from_u64(cfg.seed)),
    }
}

/// Runs training to `max_episodes`, writing into `run_dir`:
/// checkpoints/ (numbered per validation + best.ckpt), train_log.jsonl,
/// and val_log.jsonl. Training scenes and validation scenes must be
/// disjoint.
pub fn train(
    cfg: &TrainConfig,
    train_scenes: &[Arc<Scene>],
    val_scenes: &[Arc<Scene>],
    run_dir: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_scenes.is_empty() || val_scenes.is_empty() {
        return Err(NavError::Config("empty scene set".into()));
    }
    let train_ids: Vec<u64> = train_scenes.iter().map(|s| s.id).collect();
    if val_scenes.iter().any(|s| train_ids.contains(&s.id)) {
        return Err(NavError::Config(
            "validation scenes overlap training scenes".into(),
        ));
    }

    fs::create_dir_all(run_dir.join("checkpoints"))?;
    let mut train_log = BufWriter::new(File::create(run_dir.join("train_log.jsonl"))?);
    let mut val_log_file = BufWriter::new(File::create(run_dir.join("val_log.jsonl"))?);

    let constraints = TaskConstraints {
        min_geo: cfg.min_geo,
        target_classes: None,
        target_mode: cfg.model.target_mode,
    };
    let stage_pools = build_stage_pools(train_scenes, cfg);
    let val_pool = ScenePool::new(val_scenes.to_vec(), cfg.world.render);
    let val_suite = sample_tasks(
        &val_pool,
        Split::Val,
        cfg.val_tasks,
        cfg.seed ^ VAL_SEED_SALT,
        &constraints,
        &cfg.world,
    )?;

    let (model, mut store) = NavModel::new(cfg.model, cfg.seed);
    let mut opt = RmsProp::new(&store, cfg.optimizer);
    let mut envs: Vec<WorkerEnv> = (0..cfg.workers)
        .map(|w| {
            WorkerEnv::new(
                cfg.seed
                    .wrapping_add(1)
                    .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                    .wrapping_add(w as u64),
                constraints.clone(),
                cfg.world,
            )
        })
        .collect();

    let mut episodes = 0usize;
    let mut updates = 0usize;
    let mut next_val = 0usize;
    let mut consecutive_bad = 0usize;
    let mut best: Option<ValRecord> = None;
    let mut val_records = Vec::new();
    let best_path = run_dir.join("checkpoints").join("best.ckpt");
    let trainable = model.cfg.variant != Variant::Random;

    loop {
        // Validation on the cadence boundary (including episode 0).
        if episodes >= next_val || episodes >= cfg.max_episodes {
            let (sr, spl) = validate(&model, &store, &val_pool, &val_suite, cfg)?;
            let rec = ValRecord { episodes, sr, spl };
            writeln!(val_log_file, "{}", serde_json::to_string(&rec)?)?;
            val_log_file.flush()?;
            let improved = match &best {
                None => true,
                // Recency breaks exact ties.
                Some(b) => sr > b.sr || (sr == b.sr && spl >= b.spl),
            };
            if improved {
                best = Some(rec.clone());
                make_checkpoint(&model, &store, cfg).save(&best_path)?;
            }
            make_checkpoint(&model, &store, cfg)
                .save(&run_dir.join("checkpoints").join(format!("ckpt_{episodes}.ckpt")))?;
            val_records.push(rec);
            next_val += cfg.val_every;
            if episodes >= cfg.max_episodes {
                break;
            }
        }

        let stage = active_stage(cfg, stage_pools.len(), episodes);
        let pool = &stage_pools[stage];
        let finished_before: usize = envs.iter().map(|e| e.episodes_finished).sum();
        let returns_before: usize = envs.iter().map(|e| e.finished_returns.len()).sum();

        let results: Vec<WorkerResult> = if cfg.workers == 1 {
            vec![worker_round(&model, &store, &mut envs[0], pool, cfg)?]
        } else {
            let store_ref = &store;
            let model_ref = &model;
            std::thread::scope(|scope| {
                let handles: Vec<_> = envs
                    .iter_mut()
                    .map(|env| {
                        scope.spawn(move || worker_round(model_ref, store_ref, env, pool, cfg))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker thread panicked"))
                    .collect::<Result<Vec<_>>>()
            })?
        };

        let total_steps: usize = results.iter().map(|r| r.steps).sum();
        let finished_after: usize = envs.iter().map(|e| e.episodes_finished).sum();
        episodes += finished_after - finished_before;

        let mean_return = {
            let new_returns: Vec<f64> = envs
                .iter()
                .flat_map(|e| e.finished_returns.iter().copied())
                .skip(returns_before)
                .collect();
            if new_returns.is_empty() {
                None
            } else {
                Some(new_returns.iter().sum::<f64>() / new_returns.len() as f64)
            }
        };

        if !trainable || total_steps == 0 {
            continue;
        }

        let mut losses = LossBreakdown::default();
        for r in &results {
            losses.add(&r.losses);
        }
        losses.scale(1.0 / total_steps as f64);

        let mut applied_any = false;
        let mut grad_norm = 0.0f64;
        if cfg.per_worker_updates {
            for r in &results {
                let mut g = r.grads.clone();
                g.scale(1.0 / r.steps.max(1) as f64);
                g.clip_global_norm(cfg.grad_clip);
                grad_norm = grad_norm.max(g.global_norm());
                if losses.is_finite() && opt.update(&mut store, &g) {
                    applied_any = true;
                }
            }
        } else {
            let mut g = store.grad_zeros();
            for r in &results {
                g.accumulate(&r.grads, 1.0 / total_steps as f64);
            }
            g.clip_global_norm(cfg.grad_clip);
            grad_norm = g.global_norm();
            applied_any = losses.is_finite() && opt.update(&mut store, &g);
        }
        if applied_any {
            model.power_iterate(&mut store, 1);
            consecutive_bad = 0;
        } else {
            consecutive_bad += 1;
            if consecutive_bad > 100 {
                return Err(NavError::Numerical(format!(
                    "aborting after {consecutive_bad} consecutive non-finite updates \
                     (last total {})",
                    losses.total
                )));
            }
        }
        updates += 1;

        let has_gen = model.cfg.variant.has_generation();
        let has_latent = model.cfg.variant.has_latent();
        let rec = TrainLogRecord {
            update: updates,
            episodes,
            e1: losses.e1,
            e2: has_gen.then_some(losses.e2),
            e3: has_latent.then_some(losses.e3),
            l_v: losses.l_v,
            total: losses.total,
            grad_norm,
            applied: applied_any,
            mean_return,
        };
        writeln!(train_log, "{}", serde_json::to_string(&rec)?)?;
    }

    train_log.flush()?;
    val_log_file.flush()?;
    Ok(TrainOutcome {
        episodes,
        updates,
        best: best.expect("at least one validation ran"),
        best_checkpoint: best_path,
        val_log: val_records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_scene, SceneSpec};

    fn scenes(seed0: u64, n: usize) -> Vec<Arc<Scene>> {
        (0..n)
            .map(|i| {
                Arc::new(generate_scene(seed0 + i as u64, seed0 + i as u64, &SceneSpec::default()).unwrap())
            })
            .collect()
    }

    fn tiny_cfg(variant: Variant, workers: usize) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.model.variant = variant;
        cfg.workers = workers;
        cfg.max_episodes = 12;
        cfg.val_every = 6;
        cfg.val_tasks = 4;
        cfg.curriculum = false;
        cfg.seed = 5;
        cfg
    }

    #[test]
    fn single_worker_training_is_byte_reproducible() {
        let tr = scenes(500, 3);
        let va = scenes(600, 2);
        let cfg = tiny_cfg(Variant::Bc, 1);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let o1 = train(&cfg, &tr, &va, d1.path()).unwrap();
        let o2 = train(&cfg, &tr, &va, d2.path()).unwrap();
        assert_eq!(o1.episodes, o2.episodes);
        let v1 = fs::read(d1.path().join("val_log.jsonl")).unwrap();
        let v2 = fs::read(d2.path().join("val_log.jsonl")).unwrap();
        assert_eq!(v1, v2);
        let t1 = fs::read(d1.path().join("train_log.jsonl")).unwrap();
        let t2 = fs::read(d2.path().join("train_log.jsonl")).unwrap();
        assert_eq!(t1, t2);
        assert!(o1.best_checkpoint.exists());
    }

    #[test]
    fn multi_worker_training_runs_and_checkpoints() {
        let tr = scenes(700, 3);
        let va = scenes(800, 2);
        let cfg = tiny_cfg(Variant::Full, 2);
        let dir = tempfile::tempdir().unwrap();
        let out = train(&cfg, &tr, &va, dir.path()).unwrap();
        assert!(out.episodes >= cfg.max_episodes);
        assert!(out.updates > 0);
        assert!(out.best_checkpoint.exists());
        let ckpt = Checkpoint::load(&out.best_checkpoint).unwrap();
        assert!(ckpt.store.all_finite());
        // The log contains E2/E3 for the full variant.
        let log = fs::read_to_string(dir.path().join("train_log.jsonl")).unwrap();
        let first: TrainLogRecord = serde_json::from_str(log.lines().next().unwrap()).unwrap();
        assert!(first.e2.is_some() && first.e3.is_some());
    }

    #[test]
    fn bc_log_has_no_generation_terms() {
        let tr = scenes(900, 3);
        let va = scenes(950, 2);
        let cfg = tiny_cfg(Variant::Bc, 1);
        let dir = tempfile::tempdir().unwrap();
        train(&cfg, &tr, &va, dir.path()).unwrap();
        let log = fs::read_to_string(dir.path().join("train_log.jsonl")).unwrap();
        assert!(!log.is_empty());
        for line in log.lines() {
            assert!(!line.contains("\"e2\""), "{line}");
            assert!(!line.contains("\"e3\""), "{line}");
        }
    }

    #[test]
    fn overlapping_scene_sets_rejected() {
        let tr = scenes(300, 3);
        let dir = tempfile::tempdir().unwrap();
        let err = train(&tiny_cfg(Variant::Bc, 1), &tr, &tr[..1].to_vec(), dir.path());
        assert!(err.is_err());
    }

    #[test]
    fn curriculum_stages_grow_monotonically() {
        let mut cfg = TrainConfig::default();
        cfg.stage_schedule = [0, 10, 20, 30];
        let pool_scenes = scenes(1000, 8);
        let pools = build_stage_pools(&pool_scenes, &cfg);
        assert_eq!(pools.len(), 4);
        for w in pools.windows(2) {
            assert!(w[0].len() <= w[1].len());
        }
        assert_eq!(pools[3].len(), 8);
        assert_eq!(active_stage(&cfg, 4, 0), 0);
        assert_eq!(active_stage(&cfg, 4, 15), 1);
        assert_eq!(active_stage(&cfg, 4, 30), 3);
        // Disabled curriculum: one stage with everything.
        cfg.curriculum = false;
        let pools = build_stage_pools(&pool_scenes, &cfg);
        assert_eq!(pools.len(), 1);
        assert_eq!(active_stage(&cfg, 1, 999), 0);
    }
}
