//! Task-suite sampling over scene pools.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::navmodel::TargetMode;
use crate::world::{
    build_nav_graph, geodesic_field, goal_poses, pose_distance_field, render_view, NavGraph,
    NavTask, Pose, RenderParams, Scene, Target, TaskRuntime, WorldParams,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    UnseenKnownTargets,
    UnseenNovelTargets,
}

#[derive(Clone, Debug)]
pub struct TaskConstraints {
    /// Minimum start geodesic distance (cells); keeps starts outside the
    /// success radius.
    pub min_geo: u32,
    /// Allowed goal classes (None = every class present in the scene).
    pub target_classes: Option<Vec<usize>>,
    pub target_mode: TargetMode,
}

impl Default for TaskConstraints {
    fn default() -> Self {
        TaskConstraints {
            min_geo: 2,
            target_classes: None,
            target_mode: TargetMode::View,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TaskSuite {
    pub tasks: Vec<NavTask>,
    pub split: Split,
    /// Percentage of tasks whose shortest-path/Euclidean ratio is in
    /// [1, 1.1].
    pub p_ratio: f64,
}

impl TaskSuite {
    pub fn recompute_p(&self) -> f64 {
        percent_near_straight(&self.tasks)
    }
}

fn percent_near_straight(tasks: &[NavTask]) -> f64 {
    if tasks.is_empty() {
        return 0.0;
    }
    let c = tasks
        .iter()
        .filter(|t| t.ratio >= 1.0 && t.ratio <= 1.1)
        .count();
    100.0 * c as f64 / tasks.len() as f64
}

/// Scenes plus derived structures (graphs, goal-pose sets) cached for
/// repeated sampling; safe to share across worker threads.
pub struct ScenePool {
    pub scenes: Vec<Arc<Scene>>,
    pub graphs: Vec<Arc<NavGraph>>,
    pub render: RenderParams,
    goal_cache: Mutex<HashMap<(usize, usize), Arc<Vec<Pose>>>>,
}

impl ScenePool {
    pub fn new(scenes: Vec<Arc<Scene>>, render: RenderParams) -> ScenePool {
        let graphs = scenes.iter().map(|s| Arc::new(build_nav_graph(s))).collect();
        ScenePool {
            scenes,
            graphs,
            render,
            goal_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn scene_ids(&self) -> Vec<u64> {
        self.scenes.iter().map(|s| s.id).collect()
    }

    pub fn index_of(&self, scene_id: u64) -> Option<usize> {
        self.scenes.iter().position(|s| s.id == scene_id)
    }

    /// All poses where `class` is visible in the front view within the
    /// visibility threshold; memoized per (scene, class).
    pub fn goal_poses(&self, idx: usize, class: usize) -> Arc<Vec<Pose>> {
        let mut cache = self.goal_cache.lock().unwrap();
        cache
            .entry((idx, class))
            .or_insert_with(|| Arc::new(goal_poses(&self.scenes[idx], class, &self.render)))
            .clone()
    }

    /// Builds the per-task runtime (distance fields, expert).
    pub fn runtime(&self, task: &NavTask) -> Result<TaskRuntime> {
        let idx = self.index_of(task.scene_id).ok_or_else(|| {
            NavError::TaskSampling(format!("scene {} not in pool", task.scene_id))
        })?;
        TaskRuntime::new(
            self.scenes[idx].clone(),
            self.graphs[idx].clone(),
            task.clone(),
        )
    }
}

/// Samples `n` solvable tasks. Deterministic per seed; fails loudly with
/// counts when the constraints cannot be met.
pub fn sample_tasks(
    pool: &ScenePool,
    split: Split,
    n: usize,
    seed: u64,
    constraints: &TaskConstraints,
    world: &WorldParams,
) -> Result<TaskSuite> {
    if pool.is_empty() {
        return Err(NavError::TaskSampling("empty scene pool".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let max_attempts = 200 * n.max(1);
    while tasks.len() < n && attempts < max_attempts {
        attempts += 1;
        let idx = rng.gen_range(0..pool.len());
        if let Some(task) = try_sample(pool, idx, &mut rng, constraints, world) {
            tasks.push(task);
        }
    }
    if tasks.len() < n {
        return Err(NavError::TaskSampling(format!(
            "sampled {}/{} tasks after {} attempts (min_geo {}, classes {:?})",
            tasks.len(),
            n,
            attempts,
            constraints.min_geo,
            constraints.target_classes
        )));
    }
    let p_ratio = percent_near_straight(&tasks);
    Ok(TaskSuite {
        tasks,
        split,
        p_ratio,
    })
}

fn try_sample(
    pool: &ScenePool,
    idx: usize,
    rng: &mut ChaCha8Rng,
    constraints: &TaskConstraints,
    world: &WorldParams,
) -> Option<NavTask> {
    let scene = &pool.scenes[idx];
    let mut classes = scene.classes_present();
    if let Some(allowed) = &constraints.target_classes {
        classes.retain(|c| allowed.contains(c));
    }
    let &class = classes.choose(rng)?;
    let gps = pool.goal_poses(idx, class);
    if gps.is_empty() {
        return None;
    }
    let mut goal_cells: Vec<(i32, i32)> = gps.iter().map(|p| (p.x, p.y)).collect();
    goal_cells.sort_unstable();
    goal_cells.dedup();
    let geo_field = geodesic_field(scene, &goal_cells);

    let min_geo = constraints.min_geo.max(world.success_radius + 1) as i32;
    let starts: Vec<(i32, i32)> = scene
        .traversable_cells()
        .into_iter()
        .filter(|&(x, y)| geo_field[y as usize * scene.width + x as usize] >= min_geo)
        .collect();
    let &(sx, sy) = starts.choose(rng)?;
    let start = Pose {
        x: sx,
        y: sy,
        heading: rng.gen_range(0..4u8),
    };

    let pose_dist = pose_distance_field(&pool.graphs[idx], &gps);
    let d = pose_dist[pool.graphs[idx].node(start)];
    if d < 0 {
        return None;
    }
    let optimal_len = d as usize + 1; // plus the final stop
    let start_geodesic = geo_field[sy as usize * scene.width + sx as usize] as u32;

    let euclid_cells = goal_cells
        .iter()
        .map(|&(gx, gy)| (((gx - sx).pow(2) + (gy - sy).pow(2)) as f64).sqrt())
        .fold(f64::INFINITY, f64::min);
    let ratio = start_geodesic as f64 / euclid_cells.max(1e-9);

    let target = match constraints.target_mode {
        TargetMode::Class => {
            let mut onehot = vec![0.0; 6.max(class)];
            onehot[class - 1] = 1.0;
            Target::Class(onehot)
        }
        TargetMode::View => {
            let gp = gps.choose(rng).copied()?;
            Target::View(render_view(scene, gp, &pool.render))
        }
    };

    Some(NavTask {
        scene_id: scene.id,
        start,
        goal_class: class,
        goal_poses: gps.as_ref().clone(),
        target,
        optimal_len,
        start_geodesic,
        euclidean_start_goal: euclid_cells * scene.cell_size_m,
        ratio,
    })
}
