//! On-disk format round trips: checkpoints, scene files, and the
//! content-hash integrity chain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use infonav::cli::{fnv1a, gen_scenes, load_manifest, load_split, SceneGenConfig, SceneSplit};
use infonav::navmodel::{ModelConfig, NavModel, Variant};
use infonav::nnet::{Checkpoint, RmsPropConfig, RngState, Tensor};
use infonav::world::SceneFile;

#[test]
fn checkpoint_round_trips_parameters_exactly() {
    for variant in [Variant::Full, Variant::Bc, Variant::Nogen] {
        let cfg = ModelConfig {
            variant,
            ..ModelConfig::default()
        };
        let (_, store) = NavModel::new(cfg, 99);
        let rng = ChaCha8Rng::seed_from_u64(5);
        let opt_state: Vec<Tensor> = store
            .defs()
            .iter()
            .map(|d| Tensor {
                rows: d.rows,
                cols: d.cols,
                data: (0..d.rows * d.cols).map(|i| i as f64 * 0.125).collect(),
            })
            .collect();
        let ckpt = Checkpoint {
            model_config: serde_json::to_value(cfg).unwrap(),
            store: store.clone(),
            optimizer: RmsPropConfig::default(),
            opt_state: Some(opt_state.clone()),
            rng: RngState::capture(&rng),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ckpt.save(&path).unwrap();

        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.store.defs(), store.defs());
        for id in 0..store.len() {
            assert_eq!(loaded.store.get(id).data, store.get(id).data, "group {id}");
        }
        let lstate = loaded.opt_state.unwrap();
        for (a, b) in lstate.iter().zip(&opt_state) {
            assert_eq!(a.data, b.data);
        }
        assert_eq!(loaded.optimizer, RmsPropConfig::default());
        // The restored RNG continues the original stream.
        let mut restored = loaded.rng.restore().unwrap();
        let mut original = rng.clone();
        use rand::Rng;
        for _ in 0..16 {
            assert_eq!(restored.gen::<u64>(), original.gen::<u64>());
        }
        let reparsed: ModelConfig = serde_json::from_value(loaded.model_config).unwrap();
        assert_eq!(reparsed, cfg);
    }
}

#[test]
fn corrupt_checkpoint_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ckpt");
    std::fs::write(&path, b"not a checkpoint at all").unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let cfg = ModelConfig::default();
    let (_, store) = NavModel::new(cfg, 1);
    let ckpt = Checkpoint {
        model_config: serde_json::to_value(cfg).unwrap(),
        store,
        optimizer: RmsPropConfig::default(),
        opt_state: None,
        rng: RngState::capture(&ChaCha8Rng::seed_from_u64(0)),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 64]).unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

#[test]
fn fnv1a_matches_published_test_vectors() {
    assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
    assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    assert_eq!(fnv1a(b"foobar"), 0x8594_4171_f739_67e8);
}

#[test]
fn scene_set_survives_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SceneGenConfig {
        n_train: 4,
        n_val: 2,
        n_test: 2,
        ..SceneGenConfig::default()
    };
    let manifest = gen_scenes(&cfg, dir.path()).unwrap();
    let reloaded = load_manifest(dir.path()).unwrap();
    assert_eq!(manifest, reloaded);

    for split in [SceneSplit::Train, SceneSplit::Val, SceneSplit::Test] {
        let scenes = load_split(dir.path(), split).unwrap();
        for scene in &scenes {
            // Serialize -> parse -> compare semantic content.
            let file = SceneFile::from_scene(scene);
            let json = serde_json::to_string(&file).unwrap();
            let back = serde_json::from_str::<SceneFile>(&json)
                .unwrap()
                .into_scene()
                .unwrap();
            assert_eq!(back.id, scene.id);
            assert_eq!(back.width, scene.width);
            assert_eq!(back.height, scene.height);
            for y in 0..scene.height as i32 {
                for x in 0..scene.width as i32 {
                    assert_eq!(back.is_wall(x, y), scene.is_wall(x, y));
                    assert_eq!(back.object_class_at(x, y), scene.object_class_at(x, y));
                }
            }
        }
    }
}

#[test]
fn splits_have_disjoint_scene_ids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SceneGenConfig {
        n_train: 3,
        n_val: 3,
        n_test: 3,
        ..SceneGenConfig::default()
    };
    gen_scenes(&cfg, dir.path()).unwrap();
    let mut all = Vec::new();
    for split in [SceneSplit::Train, SceneSplit::Val, SceneSplit::Test] {
        for s in load_split(dir.path(), split).unwrap() {
            all.push(s.id);
        }
    }
    let unique: std::collections::HashSet<u64> = all.iter().copied().collect();
    assert_eq!(unique.len(), all.len());
}
