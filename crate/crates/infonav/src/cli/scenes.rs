//! Scene-set generation, the on-disk manifest, and verified loading.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::world::{generate_scene, Scene, SceneFile, SceneSpec};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SceneGenConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Square scene side lengths, cycled across each split.
    pub sizes: Vec<usize>,
    pub wall_density: f64,
    pub object_classes: usize,
    pub objects_per_scene: usize,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            seed: 0,
            n_train: 20,
            n_val: 5,
            n_test: 5,
            sizes: vec![9, 11, 13],
            wall_density: 0.15,
            object_classes: 6,
            objects_per_scene: 6,
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(NavError::Config("every split needs at least one scene".into()));
        }
        if self.sizes.iter().any(|&s| s < 5) {
            return Err(NavError::Config("scene side length must be >= 5".into()));
        }
        if !(0.0..=0.5).contains(&self.wall_density) {
            return Err(NavError::Config("wall density must be in [0, 0.5]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SceneSplit {
    Train,
    Val,
    Test,
}

impl SceneSplit {
    pub fn tag(self) -> &'static str {
        match self {
            SceneSplit::Train => "train",
            SceneSplit::Val => "val",
            SceneSplit::Test => "test",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub split: SceneSplit,
    pub file: String,
    pub id: u64,
    pub width: usize,
    pub height: usize,
    pub walls: usize,
    /// Difficulty quartile (1..=4) within the split, by area then walls.
    pub difficulty_group: u8,
    /// FNV-1a 64 over the scene file bytes.
    pub content_hash: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub schema_version: u32,
    pub config: SceneGenConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub entries: Vec<ManifestEntry>,
    /// FNV-1a 64 over all entry hashes, in order.
    pub manifest_hash: String,
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn wall_count(scene: &Scene) -> usize {
    (0..scene.height as i32)
        .flat_map(|y| (0..scene.width as i32).map(move |x| (x, y)))
        .filter(|&(x, y)| scene.is_wall(x, y))
        .count()
}

/// Generates the train/val/test scene sets into `dir` with disjoint ids
/// and writes manifest.json. Deterministic per config.
pub fn gen_scenes(cfg: &SceneGenConfig, dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let splits = [
        (SceneSplit::Train, cfg.n_train, 0u64),
        (SceneSplit::Val, cfg.n_val, 1000),
        (SceneSplit::Test, cfg.n_test, 2000),
    ];
    let mut entries = Vec::new();
    for (split, n, id_base) in splits {
        let mut split_entries = Vec::new();
        for i in 0..n {
            let side = cfg.sizes[i % cfg.sizes.len()];
            let spec = SceneSpec {
                width: side,
                height: side,
                wall_density: cfg.wall_density,
                object_classes: cfg.object_classes,
                objects_per_scene: cfg.objects_per_scene,
                ..SceneSpec::default()
            };
            let id = id_base + 1 + i as u64;
            let scene = generate_scene(cfg.seed.wrapping_add(id.wrapping_mul(7919)), id, &spec)?;
            let file = format!("{}_{:03}.json", split.tag(), i);
            let bytes = serde_json::to_vec_pretty(&SceneFile::from_scene(&scene))?;
            fs::write(dir.join(&file), &bytes)?;
            split_entries.push(ManifestEntry {
                split,
                file,
                id,
                width: scene.width,
                height: scene.height,
                walls: wall_count(&scene),
                difficulty_group: 0,
                content_hash: format!("{:016x}", fnv1a(&bytes)),
            });
        }
        // Difficulty quartiles within the split.
        let mut order: Vec<usize> = (0..split_entries.len()).collect();
        order.sort_by_key(|&i| {
            let e = &split_entries[i];
            (e.width * e.height, e.walls, e.id)
        });
        let q = split_entries.len().div_ceil(4).max(1);
        for (rank, &i) in order.iter().enumerate() {
            split_entries[i].difficulty_group = (rank / q).min(3) as u8 + 1;
        }
        entries.extend(split_entries);
    }

    let mut hash_input = Vec::new();
    for e in &entries {
        hash_input.extend_from_slice(e.content_hash.as_bytes());
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        config: cfg.clone(),
        n_train: cfg.n_train,
        n_val: cfg.n_val,
        n_test: cfg.n_test,
        entries,
        manifest_hash: format!("{:016x}", fnv1a(&hash_input)),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let bytes = fs::read(dir.join("manifest.json"))?;
    let m: Manifest = serde_json::from_slice(&bytes)?;
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(NavError::Config(format!(
            "unsupported manifest schema {}",
            m.schema_version
        )));
    }
    Ok(m)
}

/// Loads one split, verifying each file's content hash against the
/// manifest (scene files are immutable after generation).
pub fn load_split(dir: &Path, split: SceneSplit) -> Result<Vec<Arc<Scene>>> {
    let manifest = load_manifest(dir)?;
    let mut scenes = Vec::new();
    for e in manifest.entries.iter().filter(|e| e.split == split) {
        let bytes = fs::read(dir.join(&e.file))?;
        let hash = format!("{:016x}", fnv1a(&bytes));
        if hash != e.content_hash {
            return Err(NavError::Config(format!(
                "scene file {} modified after generation (hash {} != manifest {})",
                e.file, hash, e.content_hash
            )));
        }
        let scene = serde_json::from_slice::<SceneFile>(&bytes)?.into_scene()?;
        if scene.id != e.id {
            return Err(NavError::Config(format!(
                "scene id mismatch in {}: {} != {}",
                e.file, scene.id, e.id
            )));
        }
        scenes.push(Arc::new(scene));
    }
    if scenes.is_empty() {
        return Err(NavError::Config(format!(
            "no {} scenes found in {}",
            split.tag(),
            dir.display()
        )));
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_split_counts_and_disjoint_ids() {
        let dir = tempfile::tempdir().unwrap();
        let m = gen_scenes(&SceneGenConfig::default(), dir.path()).unwrap();
        assert_eq!(m.entries.len(), 30);
        assert_eq!(m.entries.iter().filter(|e| e.split == SceneSplit::Train).count(), 20);
        assert_eq!(m.entries.iter().filter(|e| e.split == SceneSplit::Val).count(), 5);
        assert_eq!(m.entries.iter().filter(|e| e.split == SceneSplit::Test).count(), 5);
        let ids: HashSet<u64> = m.entries.iter().map(|e| e.id).collect();
        assert_eq!(ids.len(), 30);
        // Manifest count equals files on disk.
        let files = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(files, 31); // scenes + manifest.json
    }

    #[test]
    fn same_seed_gives_identical_manifest_hash() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let cfg = SceneGenConfig::default();
        let m1 = gen_scenes(&cfg, d1.path()).unwrap();
        let m2 = gen_scenes(&cfg, d2.path()).unwrap();
        assert_eq!(m1.manifest_hash, m2.manifest_hash);
        let mut cfg2 = cfg.clone();
        cfg2.seed = 1;
        let d3 = tempfile::tempdir().unwrap();
        let m3 = gen_scenes(&cfg2, d3.path()).unwrap();
        assert_ne!(m1.manifest_hash, m3.manifest_hash);
    }

    #[test]
    fn loading_verifies_content_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let m = gen_scenes(&SceneGenConfig::default(), dir.path()).unwrap();
        let scenes = load_split(dir.path(), SceneSplit::Train).unwrap();
        assert_eq!(scenes.len(), 20);
        // Tamper with one file; loading must fail loudly.
        let victim = &m.entries[0].file;
        let mut bytes = fs::read(dir.path().join(victim)).unwrap();
        bytes.push(b' ');
        fs::write(dir.path().join(victim), &bytes).unwrap();
        assert!(load_split(dir.path(), SceneSplit::Train).is_err());
    }

    #[test]
    fn sizes_cycle_and_groups_are_quartiles() {
        let dir = tempfile::tempdir().unwrap();
        let m = gen_scenes(&SceneGenConfig::default(), dir.path()).unwrap();
        let train: Vec<_> = m
            .entries
            .iter()
            .filter(|e| e.split == SceneSplit::Train)
            .collect();
        let sizes: HashSet<usize> = train.iter().map(|e| e.width).collect();
        assert_eq!(sizes, HashSet::from([9, 11, 13]));
        for g in 1..=4u8 {
            assert!(train.iter().any(|e| e.difficulty_group == g));
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = SceneGenConfig::default();
        cfg.n_val = 0;
        assert!(gen_scenes(&cfg, tempfile::tempdir().unwrap().path()).is_err());
    }
}
