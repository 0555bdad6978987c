//! Temporary diagnostic: offline supervised fit of the bc model on
//! expert-path states, to separate representation capacity from the
//! on-policy data distribution.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use infonav::evalkit::{sample_tasks, ScenePool, Split, TaskConstraints};
use infonav::navmodel::{LossWeights, ModelConfig, NavModel, StepInput, Variant};
use infonav::nnet::{RmsProp, RmsPropConfig};
use infonav::world::{generate_scene, observe, step, EpisodeState, SceneSpec, WorldParams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let updates: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(5000);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-4);

    let w = WorldParams::default();
    let scenes: Vec<_> = (0..8)
        .map(|i| Arc::new(generate_scene(3000 + i, i, &SceneSpec::default()).unwrap()))
        .collect();
    let pool = ScenePool::new(scenes, w.render);
    let suite = sample_tasks(&pool, Split::Train, 200, 5, &TaskConstraints::default(), &w).unwrap();

    let mut cfg = ModelConfig::default();
    cfg.variant = Variant::Bc;
    let (model, mut store) = NavModel::new(cfg, 7);
    model.power_iterate(&mut store, 50);

    let on_policy = args.get(3).map(|s| s == "onpolicy").unwrap_or(false);

    // Dataset: expert-path states, or states visited by the untrained
    // sampling policy (matching the trainer's collection distribution).
    let mut data: Vec<StepInput> = Vec::new();
    if on_policy {
        use infonav::evalkit::TaskConstraints;
        use infonav::trainer::{collect_rollout, WorkerEnv};
        let mut env = WorkerEnv::new(42, TaskConstraints::default(), w);
        while data.len() < 6000 {
            let (steps, _) = collect_rollout(&model, &store, &mut env, &pool, 10).unwrap();
            for s in steps {
                data.push(s.input);
            }
        }
    } else {
        for t in &suite.tasks {
            let rt = pool.runtime(t).unwrap();
            let mut ep = EpisodeState::start(&rt.task);
            let mut prev = None;
            while !ep.done {
                let obs = observe(&rt.scene, ep.pose, &w.render);
                let a = rt.expert_action(ep.pose).unwrap();
                data.push(StepInput {
                    views: model.observation_features(&obs),
                    target: model.target_features(&rt.task.target),
                    prev_action: prev,
                    chosen_action: a.index(),
                    expert_action: Some(a.index()),
                    recon_target: None,
                    return_target: 0.0,
                    noise: Vec::new(),
                });
                prev = Some(a.index());
                step(&mut ep, &rt, &w, a).unwrap();
            }
        }
    }
    println!("dataset: {} steps ({} mode)", data.len(), if on_policy { "on-policy" } else { "expert" });

    let mut hist = [0usize; 7];
    for d in &data {
        hist[d.expert_action.unwrap()] += 1;
    }
    println!("label histogram {hist:?}");

    let weights = LossWeights::default();
    let opt_cfg = RmsPropConfig { lr, ..Default::default() };
    let mut opt = RmsProp::new(&store, opt_cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for u in 0..updates {
        let mut grads = store.grad_zeros();
        let mut ce = 0.0;
        let batch = 60;
        for _ in 0..batch {
            let s = &data[rng.gen_range(0..data.len())];
            let (l, trace) = model.training_losses(&store, s, &weights).unwrap();
            model.backward(&store, &trace, &weights, &mut grads, 1.0 / batch as f64);
            ce += l.e1;
        }
        grads.clip_global_norm(40.0);
        opt.update(&mut store, &grads);
        model.power_iterate(&mut store, 1);
        if u % 500 == 0 || u == updates - 1 {
            // Full-set accuracy every so often.
            let mut correct = 0usize;
            for s in data.iter().step_by(3) {
                let (logits, _) = model.test_forward(&store, &s.views, &s.target, s.prev_action, &[]);
                let am = infonav::navmodel::argmax(&logits);
                correct += (am == s.expert_action.unwrap()) as usize;
            }
            let n = data.iter().step_by(3).count();
            println!(
                "update {u}: batch CE {:.3}, accuracy {:.1}%",
                ce / batch as f64,
                100.0 * correct as f64 / n as f64
            );
        }
    }
}
