//! Navigation tasks, episode state, and environment dynamics with the
//! shaped reward.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::graph::{
    expert_action, geodesic_field, pose_distance_field, Action, NavGraph, Pose,
};
use super::raycast::{observe, render_view, Observation, RenderParams, View};
use super::scene::Scene;
use crate::error::{NavError, Result};

pub const REWARD_SUCCESS: f64 = 10.0;
pub const REWARD_COLLIDE: f64 = -0.2;
pub const REWARD_STEP: f64 = -0.01;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct WorldParams {
    pub render: RenderParams,
    /// Success when the stop is issued within this many cells of a goal.
    pub success_radius: u32,
    pub max_steps: usize,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            render: RenderParams::default(),
            success_radius: 1,
            max_steps: 100,
        }
    }
}

/// Navigation target: a single view rendered at a goal pose, or a class
/// one-hot.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum Target {
    View(View),
    Class(Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NavTask {
    pub scene_id: u64,
    pub start: Pose,
    pub goal_class: usize,
    pub goal_poses: Vec<Pose>,
    pub target: Target,
    /// Expert shortest-path length in actions, including the final stop.
    pub optimal_len: usize,
    /// Start geodesic distance in cells.
    pub start_geodesic: u32,
    pub euclidean_start_goal: f64,
    /// Shortest-path / Euclidean difficulty ratio.
    pub ratio: f64,
}

/// Per-task precomputation: distance fields shared by reward shaping and
/// the expert. Immutable after construction, safe for concurrent reads.
pub struct TaskRuntime {
    pub scene: Arc<Scene>,
    pub graph: Arc<NavGraph>,
    pub task: NavTask,
    pub goal_cells: Vec<(i32, i32)>,
    geo_field: Vec<i32>,
    pose_dist: Vec<i32>,
}

impl TaskRuntime {
    pub fn new(scene: Arc<Scene>, graph: Arc<NavGraph>, task: NavTask) -> Result<TaskRuntime> {
        let mut goal_cells: Vec<(i32, i32)> = task.goal_poses.iter().map(|p| (p.x, p.y)).collect();
        goal_cells.sort_unstable();
        goal_cells.dedup();
        let geo_field = geodesic_field(&scene, &goal_cells);
        let pose_dist = pose_distance_field(&graph, &task.goal_poses);
        let rt = TaskRuntime {
            scene,
            graph,
            task,
            goal_cells,
            geo_field,
            pose_dist,
        };
        if rt.geodesic(rt.task.start).is_none() {
            return Err(NavError::Unreachable {
                scene_id: rt.scene.id,
                x: rt.task.start.x,
                y: rt.task.start.y,
            });
        }
        Ok(rt)
    }

    pub fn geodesic(&self, pose: Pose) -> Option<u32> {
        let d = self.geo_field[pose.y as usize * self.scene.width + pose.x as usize];
        if d < 0 {
            None
        } else {
            Some(d as u32)
        }
    }

    pub fn expert_action(&self, pose: Pose) -> Result<Action> {
        expert_action(&self.graph, &self.pose_dist, pose)
    }

    pub fn expert_path_len(&self, pose: Pose) -> Option<usize> {
        let d = self.pose_dist[self.graph.node(pose)];
        if d < 0 {
            None
        } else {
            Some(d as usize + 1) // plus the final stop
        }
    }

    /// Expert tuple (a_gt, x_next_gt): the first expert action recomputed
    /// from the current pose, and the observation after applying it (the
    /// current observation when a_gt is stop).
    pub fn expert_tuple(
        &self,
        pose: Pose,
        params: &WorldParams,
    ) -> Result<(Action, Observation)> {
        let a = self.expert_action(pose)?;
        let next_pose = if a == Action::Stop {
            pose
        } else {
            self.graph.apply(pose, a).expect("expert chose blocked move")
        };
        Ok((a, observe(&self.scene, next_pose, &params.render)))
    }

    /// The stop-success condition: goal class present in the current
    /// front-view class channels and geodesic within the success radius.
    pub fn is_success_state(&self, pose: Pose, params: &WorldParams) -> bool {
        match self.geodesic(pose) {
            Some(d) if d <= params.success_radius => {}
            _ => return false,
        }
        render_view(&self.scene, pose, &params.render).sees_class(self.task.goal_class, None)
    }
}

/// All poses from which the goal class is visible in the front view within
/// the visibility threshold.
pub fn goal_poses(scene: &Scene, goal_class: usize, render: &RenderParams) -> Vec<Pose> {
    let mut out = Vec::new();
    for y in 0..scene.height as i32 {
        for x in 0..scene.width as i32 {
            if !scene.traversable(x, y) {
                continue;
            }
            for heading in 0..4u8 {
                let pose = Pose { x, y, heading };
                if render_view(scene, pose, render)
                    .sees_class(goal_class, Some(render.visibility_threshold))
                {
                    out.push(pose);
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct EpisodeState {
    pub pose: Pose,
    pub t: usize,
    pub done: bool,
    pub success: bool,
    pub collisions: usize,
}

impl EpisodeState {
    pub fn start(task: &NavTask) -> EpisodeState {
        EpisodeState {
            pose: task.start,
            t: 0,
            done: false,
            success: false,
            collisions: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub collided: bool,
    pub success: bool,
    pub done: bool,
    pub geodesic_after: u32,
}

/// One environment transition. Reward follows the shaped form with fixed
/// precedence: t=0, then success, then collision, then geodesic shaping.
pub fn step(
    ep: &mut EpisodeState,
    rt: &TaskRuntime,
    params: &WorldParams,
    action: Action,
) -> Result<StepResult> {
    if ep.done {
        return Err(NavError::Contract("step on a finished episode".into()));
    }
    let geo_prev = rt
        .geodesic(ep.pose)
        .ok_or(NavError::Unreachable {
            scene_id: rt.scene.id,
            x: ep.pose.x,
            y: ep.pose.y,
        })?;
    let mut collided = false;
    let mut success = false;
    match action {
        Action::Stop => {
            success = rt.is_success_state(ep.pose, params);
        }
        a => match rt.graph.apply(ep.pose, a) {
            Some(next) => ep.pose = next,
            None => {
                collided = true;
                ep.collisions += 1;
            }
        },
    }
    let geo_after = rt.geodesic(ep.pose).expect("pose left reachable set");
    let reward = if ep.t == 0 {
        REWARD_STEP
    } else if success {
        REWARD_SUCCESS
    } else if collided {
        REWARD_COLLIDE
    } else {
        (geo_prev as f64 - geo_after as f64) + REWARD_STEP
    };
    ep.t += 1;
    ep.success = success;
    ep.done = success || action == Action::Stop || ep.t >= params.max_steps;
    Ok(StepResult {
        observation: observe(&rt.scene, ep.pose, &params.render),
        reward,
        collided,
        success,
        done: ep.done,
        geodesic_after: geo_after,
    })
}
