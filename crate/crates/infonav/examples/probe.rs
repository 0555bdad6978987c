//! Temporary diagnostic: action histogram + expert agreement of a checkpoint.

use std::path::Path;

use infonav::cli::load_split;
use infonav::evalkit::{run_episode, sample_tasks, Policy, ScenePool, Split, TaskConstraints};
use infonav::navmodel::{ActMode, ControllerState, NavModel};
use infonav::nnet::Checkpoint;
use infonav::world::{observe, WorldParams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scenes_dir = Path::new(&args[1]);
    let ckpt_path = Path::new(&args[2]);

    let ckpt = Checkpoint::load(ckpt_path).unwrap();
    let cfg = serde_json::from_value(ckpt.model_config.clone()).unwrap();
    let model = NavModel::layout(cfg);
    let store = ckpt.store;

    let scenes = load_split(scenes_dir, infonav::cli::SceneSplit::Val).unwrap();
    let world = WorldParams::default();
    let pool = ScenePool::new(scenes, world.render);
    let constraints = TaskConstraints {
        min_geo: 2,
        target_classes: None,
        target_mode: model.cfg.target_mode,
    };
    let suite = sample_tasks(&pool, Split::Val, 30, 9, &constraints, &world).unwrap();

    // 1) Greedy rollout action histogram.
    let mut hist = [0usize; 7];
    let mut succ = 0;
    for (i, task) in suite.tasks.iter().enumerate() {
        let rt = pool.runtime(task).unwrap();
        let traj = run_episode(
            &Policy::Model {
                model: &model,
                store: &store,
                mode: ActMode::Greedy,
            },
            &rt,
            &world,
            false,
            i as u64,
        )
        .unwrap();
        for a in &traj.actions {
            hist[a.index()] += 1;
        }
        succ += traj.success as usize;
    }
    println!("greedy success {succ}/30, action histogram: {hist:?}");

    // 2) Expert agreement: walk the expert path, query the greedy action.
    let mut agree = 0usize;
    let mut total = 0usize;
    let mut by_dist: std::collections::BTreeMap<u32, (usize, usize)> = Default::default();
    let mut conf = vec![[0usize; 7]; 7];
    for (i, task) in suite.tasks.iter().enumerate() {
        let rt = pool.runtime(task).unwrap();
        let mut ep = infonav::world::EpisodeState::start(&rt.task);
        let mut ctrl = ControllerState::new(1000 + i as u64);
        loop {
            let obs = observe(&rt.scene, ep.pose, &world.render);
            let expert = rt.expert_action(ep.pose).unwrap();
            let dist = rt.geodesic(ep.pose).unwrap();
            let got = model.act(&store, &obs, &rt.task.target, &mut ctrl, ActMode::Greedy);
            total += 1;
            agree += (got == expert) as usize;
            let e = by_dist.entry(dist).or_default();
            e.0 += (got == expert) as usize;
            e.1 += 1;
            conf[expert.index()][got.index()] += 1;
            // Follow the EXPERT action so we stay on the optimal path.
            ctrl.prev = Some(expert.index());
            let res = infonav::world::step(&mut ep, &rt, &world, expert).unwrap();
            let _ = res;
            if ep.done {
                break;
            }
        }
    }
    println!(
        "expert-path agreement {agree}/{total} = {:.1}%",
        100.0 * agree as f64 / total as f64
    );
    for (d, (a, n)) in &by_dist {
        println!("  dist {d:>2}: {a:>4}/{n:<4} = {:.0}%", 100.0 * *a as f64 / *n as f64);
    }
    println!("confusion rows=expert cols=model: ");
    for (i, row) in conf.iter().enumerate() {
        println!("  {i}: {row:?}");
    }
}
