//! Deterministic grid world: scenes, ray-cast observations, the pose
//! graph with its shortest-path expert, and episode dynamics.

pub mod episode;
pub mod graph;
pub mod raycast;
pub mod scene;

pub use episode::{
    goal_poses, step, EpisodeState, NavTask, StepResult, Target, TaskRuntime, WorldParams,
    REWARD_COLLIDE, REWARD_STEP, REWARD_SUCCESS,
};
pub use graph::{
    build_nav_graph, expert_action, expert_shortest_path, geodesic, geodesic_field, heading_vec,
    pose_distance_field, Action, NavGraph, Pose, ACTION_COUNT,
};
pub use raycast::{observe, render_view, Observation, RayHit, RenderParams, View};
pub use scene::{generate_scene, Scene, SceneFile, SceneObject, SceneSpec};
