//! Deterministic grid ray casting and the four-view observation.

use serde::{Deserialize, Serialize};

use super::graph::Pose;
use super::scene::Scene;

/// Rendering parameters shared by views, targets, and success checks.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct RenderParams {
    pub rays: usize,
    pub d_max: f64,
    /// Max hit distance (cells) for a pose to count as a goal pose.
    pub visibility_threshold: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            rays: 9,
            d_max: 8.0,
            visibility_threshold: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct RayHit {
    /// Center-to-center distance to the first blocking cell.
    pub distance: f64,
    /// 0 = wall, 1..=K = object class.
    pub class: usize,
}

/// One 90-degree field-of-view scan of R rays.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct View {
    pub hits: Vec<RayHit>,
    pub d_max: f64,
}

impl View {
    pub fn depth(&self, i: usize) -> f64 {
        self.hits[i].distance.min(self.d_max) / self.d_max
    }

    /// Class channel after the d_max convention: beyond range reads as wall.
    pub fn channel_class(&self, i: usize) -> usize {
        if self.hits[i].distance > self.d_max {
            0
        } else {
            self.hits[i].class
        }
    }

    /// Feature vector of dimension R * (K + 2): per ray, normalized depth
    /// followed by a (K+1)-dim one-hot class channel.
    pub fn features(&self, classes: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.hits.len() * (classes + 2));
        for i in 0..self.hits.len() {
            out.push(self.depth(i));
            let c = self.channel_class(i);
            for k in 0..=classes {
                out.push(if k == c { 1.0 } else { 0.0 });
            }
        }
        out
    }

    pub fn sees_class(&self, class: usize, max_distance: Option<f64>) -> bool {
        (0..self.hits.len()).any(|i| {
            self.channel_class(i) == class
                && max_distance.is_none_or(|d| self.hits[i].distance <= d)
        })
    }
}

/// Four views at relative headings 0, 90, 180, 270 degrees
/// (front, left, back, right), all rendered from the same cell.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Observation {
    pub views: Vec<View>,
}

impl Observation {
    pub fn front(&self) -> &View {
        &self.views[0]
    }
}

/// R rays uniformly spread across a 90-degree FOV centered on the pose
/// heading, traced with grid DDA stepping. Pure function of (scene, pose).
pub fn render_view(scene: &Scene, pose: Pose, params: &RenderParams) -> View {
    let base = pose.heading as f64 * 90.0;
    let hits = (0..params.rays)
        .map(|i| {
            let offset = if params.rays == 1 {
                0.0
            } else {
                -45.0 + 90.0 * i as f64 / (params.rays - 1) as f64
            };
            cast_ray(scene, pose.x, pose.y, (base + offset).to_radians())
        })
        .collect();
    View {
        hits,
        d_max: params.d_max,
    }
}

pub fn observe(scene: &Scene, pose: Pose, params: &RenderParams) -> Observation {
    let views = (0..4)
        .map(|r| {
            render_view(
                scene,
                Pose {
                    x: pose.x,
                    y: pose.y,
                    heading: (pose.heading + r) % 4,
                },
                params,
            )
        })
        .collect();
    Observation { views }
}

/// Amanatides-Woo traversal from the cell center; ties step x first.
fn cast_ray(scene: &Scene, x0: i32, y0: i32, angle: f64) -> RayHit {
    let (dx, dy) = (angle.cos(), angle.sin());
    let (mut cx, mut cy) = (x0, y0);
    let step_x: i32 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i32 = if dy > 0.0 { 1 } else { -1 };
    // Parametric distance to the next x/y cell boundary from the center.
    let mut t_max_x = if dx.abs() < 1e-12 {
        f64::INFINITY
    } else {
        0.5 / dx.abs()
    };
    let mut t_max_y = if dy.abs() < 1e-12 {
        f64::INFINITY
    } else {
        0.5 / dy.abs()
    };
    let t_delta_x = if dx.abs() < 1e-12 { f64::INFINITY } else { 1.0 / dx.abs() };
    let t_delta_y = if dy.abs() < 1e-12 { f64::INFINITY } else { 1.0 / dy.abs() };
    let max_iter = 4 * (scene.width + scene.height);
    for _ in 0..max_iter {
        if t_max_x <= t_max_y {
            t_max_x += t_delta_x;
            cx += step_x;
        } else {
            t_max_y += t_delta_y;
            cy += step_y;
        }
        if scene.blocks_ray(cx, cy) {
            let dist = (((cx - x0).pow(2) + (cy - y0).pow(2)) as f64).sqrt();
            let class = scene.object_class_at(cx, cy).unwrap_or(0);
            return RayHit {
                distance: dist,
                class,
            };
        }
    }
    // Border walls make this unreachable; report an out-of-range wall hit.
    RayHit {
        distance: f64::INFINITY,
        class: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::scene::{SceneFile, SceneObject};

    fn corridor_scene() -> Scene {
        // 9x5 empty-interior room.
        SceneFile {
            id: 0,
            width: 9,
            height: 5,
            cell_size_m: 0.5,
            occupancy: vec![
                "#########".into(),
                "#.......#".into(),
                "#.......#".into(),
                "#.......#".into(),
                "#########".into(),
            ],
            objects: vec![],
        }
        .into_scene()
        .unwrap()
    }

    #[test]
    fn central_ray_depth_matches_manual_trace() {
        let scene = corridor_scene();
        // Facing east from (6,2): wall at x=8, two cells ahead.
        let v = render_view(
            &scene,
            Pose { x: 6, y: 2, heading: 0 },
            &RenderParams::default(),
        );
        let mid = v.hits.len() / 2;
        assert!((v.depth(mid) - 2.0 / 8.0).abs() < 1e-12);
        assert_eq!(v.channel_class(mid), 0);
    }

    #[test]
    fn adjacent_wall_depth_one_eighth() {
        let scene = corridor_scene();
        let v = render_view(
            &scene,
            Pose { x: 7, y: 2, heading: 0 },
            &RenderParams::default(),
        );
        let mid = v.hits.len() / 2;
        assert!((v.depth(mid) - 1.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn rendering_is_pure() {
        let scene = corridor_scene();
        let p = Pose { x: 3, y: 2, heading: 1 };
        let params = RenderParams::default();
        assert_eq!(render_view(&scene, p, &params), render_view(&scene, p, &params));
    }

    #[test]
    fn observation_order_is_front_left_back_right() {
        let scene = corridor_scene();
        let params = RenderParams::default();
        let p = Pose { x: 4, y: 2, heading: 0 };
        let obs = observe(&scene, p, &params);
        for r in 0..4u8 {
            let rotated = render_view(
                &scene,
                Pose { x: 4, y: 2, heading: r },
                &params,
            );
            assert_eq!(obs.views[r as usize], rotated);
        }
    }

    #[test]
    fn rotated_pose_permutes_views() {
        let scene = corridor_scene();
        let params = RenderParams::default();
        let obs0 = observe(&scene, Pose { x: 4, y: 2, heading: 0 }, &params);
        let obs2 = observe(&scene, Pose { x: 4, y: 2, heading: 2 }, &params);
        assert_eq!(obs2.views[0], obs0.views[2]);
        assert_eq!(obs2.views[2], obs0.views[0]);
        assert_eq!(obs2.views[1], obs0.views[3]);
        assert_eq!(obs2.views[3], obs0.views[1]);
    }

    #[test]
    fn symmetric_room_center_views_nearly_equal() {
        let scene = SceneFile {
            id: 0,
            width: 9,
            height: 9,
            cell_size_m: 0.5,
            occupancy: (0..9)
                .map(|y| {
                    (0..9)
                        .map(|x| if x == 0 || y == 0 || x == 8 || y == 8 { '#' } else { '.' })
                        .collect()
                })
                .collect(),
            objects: vec![],
        }
        .into_scene()
        .unwrap();
        let obs = observe(&scene, Pose { x: 4, y: 4, heading: 0 }, &RenderParams::default());
        for v in 1..4 {
            for i in 0..obs.views[0].hits.len() {
                let d0 = obs.views[0].depth(i);
                let dv = obs.views[v].depth(i);
                assert!((d0 - dv).abs() < 1e-9, "view {v} ray {i}: {d0} vs {dv}");
            }
        }
    }

    #[test]
    fn object_class_in_channel() {
        let mut file = SceneFile::from_scene(&corridor_scene());
        file.objects = vec![SceneObject { class: 3, x: 5, y: 2 }];
        let scene = file.into_scene().unwrap();
        let v = render_view(
            &scene,
            Pose { x: 2, y: 2, heading: 0 },
            &RenderParams::default(),
        );
        let mid = v.hits.len() / 2;
        assert_eq!(v.channel_class(mid), 3);
        assert!((v.depth(mid) - 3.0 / 8.0).abs() < 1e-12);
        assert!(v.sees_class(3, Some(4.0)));
        assert!(!v.sees_class(3, Some(2.0)));
        let feats = v.features(6);
        assert_eq!(feats.len(), 9 * 8);
    }
}
