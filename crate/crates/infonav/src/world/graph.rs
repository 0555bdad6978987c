//! Pose-level navigation graph, geodesic distance fields, and the
//! shortest-path expert.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use super::scene::Scene;
use crate::error::{NavError, Result};

/// The fixed global action order; indices 0..6 break ties everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveForward,
    MoveBack,
    MoveLeft,
    MoveRight,
    RotateCcw,
    RotateCw,
    Stop,
}

pub const ACTION_COUNT: usize = 7;

impl Action {
    pub const ALL: [Action; 7] = [
        Action::MoveForward,
        Action::MoveBack,
        Action::MoveLeft,
        Action::MoveRight,
        Action::RotateCcw,
        Action::RotateCw,
        Action::Stop,
    ];

    pub fn index(self) -> usize {
        Action::ALL.iter().position(|&a| a == self).unwrap()
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }
}

/// Agent state: a free cell plus one of four headings (90-degree steps).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub x: i32,
    pub y: i32,
    pub heading: u8,
}

/// Unit vector of a heading; heading+1 is the counterclockwise neighbor.
pub fn heading_vec(heading: u8) -> (i32, i32) {
    match heading % 4 {
        0 => (1, 0),
        1 => (0, 1),
        2 => (-1, 0),
        _ => (0, -1),
    }
}

/// Pose graph with edges labeled by the six non-stop actions. Moves
/// translate relative to the heading without changing it; rotations stay
/// in place.
pub struct NavGraph {
    width: usize,
    height: usize,
    next: Vec<[i32; 6]>, // node index per action, -1 = blocked
}

impl NavGraph {
    pub fn node_count(&self) -> usize {
        self.width * self.height * 4
    }

    pub fn node(&self, pose: Pose) -> usize {
        ((pose.y as usize * self.width + pose.x as usize) * 4) + pose.heading as usize % 4
    }

    pub fn pose(&self, node: usize) -> Pose {
        let heading = (node % 4) as u8;
        let cell = node / 4;
        Pose {
            x: (cell % self.width) as i32,
            y: (cell / self.width) as i32,
            heading,
        }
    }

    /// Resulting pose of a non-stop action; None when the move is blocked.
    pub fn apply(&self, pose: Pose, action: Action) -> Option<Pose> {
        assert!(action != Action::Stop, "stop is not a graph edge");
        let n = self.next[self.node(pose)][action.index()];
        if n < 0 {
            None
        } else {
            Some(self.pose(n as usize))
        }
    }

    pub fn edges_from(&self, pose: Pose) -> Vec<(Action, Pose)> {
        let mut out = Vec::new();
        for a in &Action::ALL[..6] {
            if let Some(p) = self.apply(pose, *a) {
                out.push((*a, p));
            }
        }
        out
    }
}

pub fn build_nav_graph(scene: &Scene) -> NavGraph {
    let (w, h) = (scene.width, scene.height);
    let mut next = vec![[-1i32; 6]; w * h * 4];
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            if !scene.traversable(x, y) {
                continue;
            }
            for heading in 0..4u8 {
                let node = ((y as usize * w + x as usize) * 4) + heading as usize;
                let fwd = heading_vec(heading);
                let left = heading_vec(heading + 1);
                let deltas = [
                    fwd,
                    (-fwd.0, -fwd.1),
                    left,
                    (-left.0, -left.1),
                ];
                for (ai, (dx, dy)) in deltas.iter().enumerate() {
                    let (nx, ny) = (x + dx, y + dy);
                    if scene.traversable(nx, ny) {
                        next[node][ai] = (((ny as usize * w + nx as usize) * 4) + heading as usize) as i32;
                    }
                }
                let ccw = ((y as usize * w + x as usize) * 4) + ((heading + 1) % 4) as usize;
                let cw = ((y as usize * w + x as usize) * 4) + ((heading + 3) % 4) as usize;
                next[node][Action::RotateCcw.index()] = ccw as i32;
                next[node][Action::RotateCw.index()] = cw as i32;
            }
        }
    }
    NavGraph {
        width: w,
        height: h,
        next,
    }
}

/// Multi-source BFS distance (in cells) over traversable cells,
/// 4-connected and heading-agnostic; -1 marks unreachable cells.
pub fn geodesic_field(scene: &Scene, goal_cells: &[(i32, i32)]) -> Vec<i32> {
    let (w, h) = (scene.width, scene.height);
    let mut dist = vec![-1i32; w * h];
    let mut queue = VecDeque::new();
    for &(x, y) in goal_cells {
        if scene.traversable(x, y) {
            let i = y as usize * w + x as usize;
            if dist[i] != 0 {
                dist[i] = 0;
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        let d = dist[y as usize * w + x as usize];
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (nx, ny) = (x + dx, y + dy);
            if scene.traversable(nx, ny) {
                let ni = ny as usize * w + nx as usize;
                if dist[ni] < 0 {
                    dist[ni] = d + 1;
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    dist
}

/// Shortest cell distance to the nearest goal cell, or an explicit error
/// when unreachable (tasks are rejected at sampling time in that case).
pub fn geodesic(scene: &Scene, cell: (i32, i32), goal_cells: &[(i32, i32)]) -> Result<u32> {
    let field = geodesic_field(scene, goal_cells);
    let d = field[cell.1 as usize * scene.width + cell.0 as usize];
    if d < 0 {
        Err(NavError::Unreachable {
            scene_id: scene.id,
            x: cell.0,
            y: cell.1,
        })
    } else {
        Ok(d as u32)
    }
}

/// BFS distance (in actions) from every pose to the nearest goal pose,
/// computed once per task over reversed edges; -1 marks unreachable.
pub fn pose_distance_field(graph: &NavGraph, goal_poses: &[Pose]) -> Vec<i32> {
    let n = graph.node_count();
    let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
    for node in 0..n {
        for targets in &graph.next[node] {
            if *targets >= 0 {
                rev[*targets as usize].push(node as u32);
            }
        }
    }
    let mut dist = vec![-1i32; n];
    let mut queue = VecDeque::new();
    for p in goal_poses {
        let i = graph.node(*p);
        if dist[i] != 0 {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let d = dist[i];
        for &p in &rev[i] {
            if dist[p as usize] < 0 {
                dist[p as usize] = d + 1;
                queue.push_back(p as usize);
            }
        }
    }
    dist
}

/// First action of the shortest action path (stop at a goal pose); ties
/// broken by the fixed action order.
pub fn expert_action(graph: &NavGraph, dist: &[i32], pose: Pose) -> Result<Action> {
    let d = dist[graph.node(pose)];
    if d < 0 {
        return Err(NavError::Unreachable {
            scene_id: 0,
            x: pose.x,
            y: pose.y,
        });
    }
    if d == 0 {
        return Ok(Action::Stop);
    }
    for a in &Action::ALL[..6] {
        if let Some(next) = graph.apply(pose, *a) {
            if dist[graph.node(next)] == d - 1 {
                return Ok(*a);
            }
        }
    }
    unreachable!("BFS distance field admits no descent step");
}

/// Minimal-length action sequence from start to any goal pose, terminated
/// by stop.
pub fn expert_shortest_path(graph: &NavGraph, dist: &[i32], start: Pose) -> Result<Vec<Action>> {
    let mut actions = Vec::new();
    let mut pose = start;
    loop {
        let a = expert_action(graph, dist, pose)?;
        actions.push(a);
        if a == Action::Stop {
            return Ok(actions);
        }
        pose = graph.apply(pose, a).expect("expert chose a blocked move");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::scene::SceneFile;

    fn scene_from(rows: &[&str]) -> Scene {
        SceneFile {
            id: 0,
            width: rows[0].len(),
            height: rows.len(),
            cell_size_m: 0.5,
            occupancy: rows.iter().map(|r| r.to_string()).collect(),
            objects: vec![],
        }
        .into_scene()
        .unwrap()
    }

    #[test]
    fn boxed_in_pose_has_only_rotations() {
        let scene = scene_from(&["#####", "#.#.#", "###.#", "#...#", "#####"]);
        let graph = build_nav_graph(&scene);
        let edges = graph.edges_from(Pose { x: 1, y: 1, heading: 0 });
        let actions: Vec<Action> = edges.iter().map(|(a, _)| *a).collect();
        assert_eq!(actions, vec![Action::RotateCcw, Action::RotateCw]);
    }

    #[test]
    fn open_pose_has_six_edges() {
        let scene = scene_from(&["#####", "#...#", "#...#", "#...#", "#####"]);
        let graph = build_nav_graph(&scene);
        assert_eq!(graph.edges_from(Pose { x: 2, y: 2, heading: 3 }).len(), 6);
    }

    #[test]
    fn move_semantics_relative_to_heading() {
        let scene = scene_from(&["#####", "#...#", "#...#", "#...#", "#####"]);
        let graph = build_nav_graph(&scene);
        let p = Pose { x: 2, y: 2, heading: 0 }; // facing +x
        assert_eq!(graph.apply(p, Action::MoveForward).unwrap(), Pose { x: 3, y: 2, heading: 0 });
        assert_eq!(graph.apply(p, Action::MoveBack).unwrap(), Pose { x: 1, y: 2, heading: 0 });
        assert_eq!(graph.apply(p, Action::MoveLeft).unwrap(), Pose { x: 2, y: 3, heading: 0 });
        assert_eq!(graph.apply(p, Action::MoveRight).unwrap(), Pose { x: 2, y: 1, heading: 0 });
        assert_eq!(graph.apply(p, Action::RotateCcw).unwrap().heading, 1);
        assert_eq!(graph.apply(p, Action::RotateCw).unwrap().heading, 3);
    }

    #[test]
    fn geodesic_along_corridor() {
        let scene = scene_from(&["#######", "#.....#", "#######"]);
        assert_eq!(geodesic(&scene, (1, 1), &[(5, 1)]).unwrap(), 4);
        assert_eq!(geodesic(&scene, (5, 1), &[(5, 1)]).unwrap(), 0);
    }

    #[test]
    fn geodesic_unreachable_is_error() {
        let scene = scene_from(&["#####", "#.#.#", "#####"]);
        assert!(geodesic(&scene, (1, 1), &[(3, 1)]).is_err());
    }

    #[test]
    fn expert_trivial_cases() {
        let scene = scene_from(&["######", "#....#", "######"]);
        let graph = build_nav_graph(&scene);
        let goal = Pose { x: 4, y: 1, heading: 0 };
        let dist = pose_distance_field(&graph, &[goal]);
        assert_eq!(
            expert_shortest_path(&graph, &dist, goal).unwrap(),
            vec![Action::Stop]
        );
        let start = Pose { x: 1, y: 1, heading: 0 };
        assert_eq!(
            expert_shortest_path(&graph, &dist, start).unwrap(),
            vec![
                Action::MoveForward,
                Action::MoveForward,
                Action::MoveForward,
                Action::Stop
            ]
        );
    }
}
