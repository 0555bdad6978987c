//! Temporary diagnostic: expert-label distribution over on-policy rollouts.

use std::path::Path;

use infonav::cli::load_split;
use infonav::evalkit::ScenePool;
use infonav::navmodel::NavModel;
use infonav::nnet::Checkpoint;
use infonav::trainer::{collect_rollout, WorkerEnv};
use infonav::evalkit::TaskConstraints;
use infonav::world::WorldParams;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scenes_dir = Path::new(&args[1]);
    let ckpt = Checkpoint::load(Path::new(&args[2])).unwrap();
    let cfg = serde_json::from_value(ckpt.model_config.clone()).unwrap();
    let model = NavModel::layout(cfg);
    let store = ckpt.store;

    let scenes = load_split(scenes_dir, infonav::cli::SceneSplit::Train).unwrap();
    let world = WorldParams::default();
    let pool = ScenePool::new(scenes, world.render);
    let constraints = TaskConstraints {
        min_geo: 2,
        target_classes: None,
        target_mode: model.cfg.target_mode,
    };
    let mut env = WorkerEnv::new(12345, constraints, world);

    let mut label_hist = [0usize; 7];
    let mut geo_hist = std::collections::BTreeMap::<u32, usize>::new();
    let mut total = 0usize;
    for _ in 0..500 {
        let (steps, _) = collect_rollout(&model, &store, &mut env, &pool, 10).unwrap();
        for s in &steps {
            if let Some(a) = s.input.expert_action {
                label_hist[a] += 1;
            }
            *geo_hist.entry(s.geodesic).or_default() += 1;
            total += 1;
        }
    }
    println!("steps {total}, episodes finished {}", env.episodes_finished);
    println!("expert label histogram {label_hist:?}");
    let stop_rate = label_hist[6] as f64 / total as f64;
    println!("stop-label rate {:.3}%", 100.0 * stop_rate);
    println!("geodesic-after histogram (first 12):");
    for (g, n) in geo_hist.iter().take(12) {
        println!("  geo {g}: {n}");
    }
}
