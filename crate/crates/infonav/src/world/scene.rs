//! Procedural grid scenes.
//!
//! Occupancy marks walls; objects sit on free cells (kept as a separate
//! list, as in the interchange schema) and block both rays and movement.
//! Connectivity is enforced on the free cells that remain traversable
//! after object placement, so every sampled pose can reach every goal.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub wall_density: f64,
    /// Number of object classes K; class ids are 1..=K (0 is the wall
    /// channel in rendered views).
    pub object_classes: usize,
    pub objects_per_scene: usize,
    pub cell_size_m: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 11,
            height: 11,
            wall_density: 0.15,
            object_classes: 6,
            objects_per_scene: 6,
            cell_size_m: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct SceneObject {
    pub class: usize,
    pub x: i32,
    pub y: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub id: u64,
    pub width: usize,
    pub height: usize,
    pub cell_size_m: f64,
    walls: Vec<bool>,
    pub objects: Vec<SceneObject>,
    object_grid: Vec<u16>, // 0 = none, else class id
}

impl Scene {
    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn is_wall(&self, x: i32, y: i32) -> bool {
        !self.in_bounds(x, y) || self.walls[y as usize * self.width + x as usize]
    }

    pub fn object_class_at(&self, x: i32, y: i32) -> Option<usize> {
        if !self.in_bounds(x, y) {
            return None;
        }
        match self.object_grid[y as usize * self.width + x as usize] {
            0 => None,
            c => Some(c as usize),
        }
    }

    /// A cell the agent can stand on: in bounds, no wall, no object.
    pub fn traversable(&self, x: i32, y: i32) -> bool {
        !self.is_wall(x, y) && self.object_class_at(x, y).is_none()
    }

    /// Blocks a ray: wall or object.
    pub fn blocks_ray(&self, x: i32, y: i32) -> bool {
        self.is_wall(x, y) || self.object_class_at(x, y).is_some()
    }

    pub fn traversable_cells(&self) -> Vec<(i32, i32)> {
        let mut cells = Vec::new();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                if self.traversable(x, y) {
                    cells.push((x, y));
                }
            }
        }
        cells
    }

    pub fn classes_present(&self) -> Vec<usize> {
        let mut cs: Vec<usize> = self.objects.iter().map(|o| o.class).collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    }

    fn from_parts(
        id: u64,
        width: usize,
        height: usize,
        cell_size_m: f64,
        walls: Vec<bool>,
        objects: Vec<SceneObject>,
    ) -> Scene {
        let mut object_grid = vec![0u16; width * height];
        for o in &objects {
            object_grid[o.y as usize * width + o.x as usize] = o.class as u16;
        }
        Scene {
            id,
            width,
            height,
            cell_size_m,
            walls,
            objects,
            object_grid,
        }
    }
}

/// Plain-text interchange schema for scenes ('#' wall, '.' free).
#[derive(Serialize, Deserialize)]
pub struct SceneFile {
    pub id: u64,
    pub width: usize,
    pub height: usize,
    pub cell_size_m: f64,
    pub occupancy: Vec<String>,
    pub objects: Vec<SceneObject>,
}

impl SceneFile {
    pub fn from_scene(scene: &Scene) -> SceneFile {
        let occupancy = (0..scene.height)
            .map(|y| {
                (0..scene.width)
                    .map(|x| if scene.walls[y * scene.width + x] { '#' } else { '.' })
                    .collect()
            })
            .collect();
        SceneFile {
            id: scene.id,
            width: scene.width,
            height: scene.height,
            cell_size_m: scene.cell_size_m,
            occupancy,
            objects: scene.objects.clone(),
        }
    }

    pub fn into_scene(self) -> Result<Scene> {
        if self.occupancy.len() != self.height {
            return Err(NavError::Config("occupancy row count mismatch".into()));
        }
        let mut walls = vec![false; self.width * self.height];
        for (y, row) in self.occupancy.iter().enumerate() {
            if row.chars().count() != self.width {
                return Err(NavError::Config(format!("occupancy row {y} length mismatch")));
            }
            for (x, ch) in row.chars().enumerate() {
                walls[y * self.width + x] = match ch {
                    '#' => true,
                    '.' => false,
                    _ => return Err(NavError::Config(format!("bad occupancy char {ch:?}"))),
                };
            }
        }
        for o in &self.objects {
            if o.x < 0
                || o.y < 0
                || o.x as usize >= self.width
                || o.y as usize >= self.height
                || walls[o.y as usize * self.width + o.x as usize]
            {
                return Err(NavError::Config(format!("object on wall or out of bounds: {o:?}")));
            }
        }
        Ok(Scene::from_parts(
            self.id,
            self.width,
            self.height,
            self.cell_size_m,
            walls,
            self.objects,
        ))
    }
}

const MAX_ATTEMPTS: usize = 200;

/// Deterministic scene generation: identical (seed, spec) yields an
/// identical scene. Fails rather than returning a disconnected scene.
pub fn generate_scene(seed: u64, id: u64, spec: &SceneSpec) -> Result<Scene> {
    if spec.width < 5 || spec.height < 5 {
        return Err(NavError::Config("scene must be at least 5x5".into()));
    }
    if !(0.0..=0.35).contains(&spec.wall_density) {
        return Err(NavError::Config("wall_density must be in [0, 0.35]".into()));
    }
    if spec.objects_per_scene == 0 || spec.object_classes == 0 {
        return Err(NavError::Config("need at least one object and class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(scene) = try_generate(&mut rng, id, spec) {
            return Ok(scene);
        }
    }
    Err(NavError::SceneGeneration(format!(
        "no connected scene after {MAX_ATTEMPTS} attempts (seed {seed})"
    )))
}

fn try_generate(rng: &mut ChaCha8Rng, id: u64, spec: &SceneSpec) -> Option<Scene> {
    let (w, h) = (spec.width, spec.height);
    let mut walls = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            let interior_wall = !border && rng.gen::<f64>() < spec.wall_density;
            walls[y * w + x] = border || interior_wall;
        }
    }
    let free: Vec<usize> = (0..w * h).filter(|&i| !walls[i]).collect();
    if free.len() < spec.objects_per_scene + 8 {
        return None;
    }
    if connected_count(&walls, w, h, &[], free[0]) != free.len() {
        return None;
    }

    // Objects one class at a time (class j%K+1), preferring wall-adjacent
    // free cells; each placement must keep the remaining free cells
    // connected.
    let mut objects: Vec<SceneObject> = Vec::new();
    for j in 0..spec.objects_per_scene {
        let class = j % spec.object_classes + 1;
        let occupied: Vec<usize> = objects
            .iter()
            .map(|o| o.y as usize * w + o.x as usize)
            .collect();
        let mut candidates: Vec<usize> = free
            .iter()
            .copied()
            .filter(|&i| !occupied.contains(&i))
            .filter(|&i| {
                let (x, y) = ((i % w) as i32, (i / w) as i32);
                [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|(dx, dy)| walls[(y + dy) as usize * w + (x + dx) as usize])
            })
            .collect();
        candidates.shuffle(rng);
        let mut placed = false;
        for cell in candidates {
            let mut blocked = occupied.clone();
            blocked.push(cell);
            let start = free.iter().copied().find(|i| !blocked.contains(i))?;
            let remaining = free.len() - blocked.len();
            if connected_count(&walls, w, h, &blocked, start) == remaining {
                let (x, y) = ((cell % w) as i32, (cell / w) as i32);
                objects.push(SceneObject { class, x, y });
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(Scene::from_parts(
        id,
        w,
        h,
        spec.cell_size_m,
        walls,
        objects,
    ))
}

fn connected_count(walls: &[bool], w: usize, h: usize, blocked: &[usize], start: usize) -> usize {
    let mut seen = vec![false; w * h];
    let mut queue = std::collections::VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    let mut count = 0;
    while let Some(i) = queue.pop_front() {
        count += 1;
        let (x, y) = ((i % w) as i32, (i / w) as i32);
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                continue;
            }
            let ni = ny as usize * w + nx as usize;
            if !seen[ni] && !walls[ni] && !blocked.contains(&ni) {
                seen[ni] = true;
                queue.push_back(ni);
            }
        }
    }
    count
}
