//! Temporary diagnostic: offline fit of the full variant on expert
//! trajectories (class targets, posterior z), then greedy evaluation on
//! held-out scenes. Measures the imitation ceiling independent of the
//! on-policy collection dynamic.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use infonav::cli::{load_split, SceneSplit};
use infonav::evalkit::{
    compute_metrics, run_episode, sample_tasks, Policy, ScenePool, Split, TaskConstraints,
};
use infonav::navmodel::{
    ActMode, LossWeights, ModelConfig, NavModel, StepInput, TargetMode, Variant, ZSource,
};
use infonav::nnet::dense::standard_normal;
use infonav::nnet::{RmsProp, RmsPropConfig};
use infonav::world::{observe, step, EpisodeState, WorldParams, REWARD_SUCCESS};

struct RawStep {
    views: Vec<Vec<f64>>,
    target: Vec<f64>,
    prev: Option<usize>,
    action: usize,
    next_front: Vec<f64>,
    ret: f64,
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let updates: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(12000);
    let z_src = match args.get(2).map(String::as_str) {
        Some("prior") => ZSource::Prior,
        _ => ZSource::Posterior,
    };
    let variant = match args.get(3).map(String::as_str) {
        Some("bc") => Variant::Bc,
        Some("nogen") => Variant::Nogen,
        _ => Variant::Full,
    };

    let w = WorldParams::default();
    let dir = std::path::Path::new("/tmp/smoke/scenes");
    let train_scenes = load_split(dir, SceneSplit::Train).unwrap();
    let val_scenes = load_split(dir, SceneSplit::Val).unwrap();
    let pool = ScenePool::new(train_scenes, w.render);
    let val_pool = ScenePool::new(val_scenes, w.render);
    let constraints = TaskConstraints {
        target_mode: TargetMode::Class,
        ..TaskConstraints::default()
    };
    let suite = sample_tasks(&pool, Split::Train, 400, 5, &constraints, &w).unwrap();
    let val_suite = sample_tasks(&val_pool, Split::Val, 50, 9, &constraints, &w).unwrap();

    let cfg = ModelConfig {
        target_mode: TargetMode::Class,
        policy_z_source: z_src,
        variant,
        ..ModelConfig::default()
    };
    let (model, mut store) = NavModel::new(cfg, 7);
    model.power_iterate(&mut store, 50);

    // Expert trajectories with true discounted returns.
    let mut data: Vec<RawStep> = Vec::new();
    let tau = LossWeights::default().tau;
    for t in &suite.tasks {
        let rt = pool.runtime(t).unwrap();
        let mut ep = EpisodeState::start(&rt.task);
        let mut prev = None;
        let mut traj: Vec<RawStep> = Vec::new();
        let mut rewards: Vec<f64> = Vec::new();
        while !ep.done {
            let obs = observe(&rt.scene, ep.pose, &w.render);
            let (a, x_next) = rt.expert_tuple(ep.pose, &w).unwrap();
            traj.push(RawStep {
                views: model.observation_features(&obs),
                target: model.target_features(&rt.task.target),
                prev,
                action: a.index(),
                next_front: x_next.front().features(cfg.classes),
                ret: 0.0,
            });
            prev = Some(a.index());
            let res = step(&mut ep, &rt, &w, a).unwrap();
            rewards.push(res.reward);
        }
        assert!(ep.success && (rewards.last().unwrap() - REWARD_SUCCESS).abs() < 1e-12);
        let mut r = 0.0;
        for (s, rew) in traj.iter_mut().zip(&rewards).rev() {
            r = rew + tau * r;
            s.ret = r;
        }
        data.extend(traj);
    }
    println!("dataset: {} steps, z from {:?}", data.len(), z_src);

    let weights = LossWeights::default();
    let mut opt = RmsProp::new(&store, RmsPropConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for u in 0..updates {
        let mut grads = store.grad_zeros();
        let batch = 60;
        let mut ce = 0.0;
        for _ in 0..batch {
            let s = &data[rng.gen_range(0..data.len())];
            let input = StepInput {
                views: s.views.clone(),
                target: s.target.clone(),
                prev_action: s.prev,
                chosen_action: s.action,
                expert_action: Some(s.action),
                recon_target: cfg
                    .variant
                    .has_generation()
                    .then(|| model.encode_state(&store, &s.next_front)),
                return_target: s.ret,
                noise: if cfg.variant.has_latent() {
                    (0..cfg.d_z).map(|_| standard_normal(&mut rng)).collect()
                } else {
                    Vec::new()
                },
            };
            let (l, trace) = model.training_losses(&store, &input, &weights).unwrap();
            model.backward(&store, &trace, &weights, &mut grads, 1.0 / batch as f64);
            ce += l.e1 / batch as f64;
        }
        grads.clip_global_norm(40.0);
        opt.update(&mut store, &grads);
        model.power_iterate(&mut store, 1);

        if u % 2000 == 0 || u == updates - 1 {
            let policy = Policy::Model {
                model: &model,
                store: &store,
                mode: ActMode::Greedy,
            };
            let evals: Vec<_> = (0..2)
                .map(|auto| {
                    let trajs: Vec<_> = val_suite
                        .tasks
                        .iter()
                        .enumerate()
                        .map(|(i, t)| {
                            let rt = val_pool.runtime(t).unwrap();
                            run_episode(&policy, &rt, &w, auto == 1, 77 ^ i as u64).unwrap()
                        })
                        .collect();
                    compute_metrics(&trajs)
                })
                .collect();
            println!(
                "update {u}: batch CE {ce:.3} | val greedy SR {:.1}% SPL {:.1}% | auto SR {:.1}%",
                evals[0].sr, evals[0].spl, evals[1].sr
            );
        }
    }

    // Per-step expert agreement along expert paths, train vs held-out
    // scenes, to separate representation overfit from rollout compounding.
    for (label, p, s) in [("train", &pool, &suite), ("val", &val_pool, &val_suite)] {
        let mut agree = 0usize;
        let mut total = 0usize;
        let mut stop_hit = 0usize;
        let mut stop_total = 0usize;
        for t in &s.tasks {
            let rt = p.runtime(t).unwrap();
            let mut ep = EpisodeState::start(&rt.task);
            let mut prev = None;
            while !ep.done {
                let obs = observe(&rt.scene, ep.pose, &w.render);
                let a = rt.expert_action(ep.pose).unwrap();
                let noise: Vec<f64> = (0..cfg.d_z).map(|_| standard_normal(&mut rng)).collect();
                let (logits, _) = model.test_forward(
                    &store,
                    &model.observation_features(&obs),
                    &model.target_features(&rt.task.target),
                    prev,
                    &noise,
                );
                let pred = infonav::navmodel::argmax(&logits);
                total += 1;
                agree += (pred == a.index()) as usize;
                if a == infonav::world::Action::Stop {
                    stop_total += 1;
                    stop_hit += (pred == a.index()) as usize;
                }
                prev = Some(a.index());
                step(&mut ep, &rt, &w, a).unwrap();
            }
        }
        println!(
            "{label}: agreement {:.1}% ({total} steps), stop recall {:.1}% ({stop_total} stops)",
            100.0 * agree as f64 / total as f64,
            100.0 * stop_hit as f64 / stop_total.max(1) as f64
        );
    }
}
