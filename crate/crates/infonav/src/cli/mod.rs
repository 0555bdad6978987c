//! Command-line entry point and run-directory lifecycle.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 environment/infeasible
//! error, 4 numerical abort.

pub mod check;
pub mod scenes;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::evalkit::{
    compute_metrics, emit_report, mi_csv, mi_sweep, run_episode, sample_tasks, Policy, ScenePool,
    Split, TaskConstraints, Trajectory,
};
use crate::navmodel::{ActMode, ModelConfig, NavModel, TargetMode, Variant, ZSource};
use crate::nnet::Checkpoint;
use crate::trainer::{train, TrainConfig};

pub use check::{full_loss_gradcheck, synthetic_input};
pub use scenes::{fnv1a, gen_scenes, load_manifest, load_split, Manifest, SceneGenConfig, SceneSplit};

pub const RUN_CONFIG_SCHEMA_VERSION: u32 = 1;

/// Fully resolved run configuration persisted as config.json; no defaults
/// left implicit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenes_dir: String,
    pub train: TrainConfig,
}

pub fn exit_code(e: &NavError) -> i32 {
    match e {
        NavError::Config(_) | NavError::Json(_) | NavError::Checkpoint(_) => 2,
        NavError::SceneGeneration(_)
        | NavError::TaskSampling(_)
        | NavError::Unreachable { .. }
        | NavError::Io(_) => 3,
        NavError::Numerical(_) | NavError::Contract(_) => 4,
    }
}

/// Resolves output paths against the INFONAV_RUN_ROOT override.
fn resolve_dir(p: &Path) -> PathBuf {
    match std::env::var_os("INFONAV_RUN_ROOT") {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

#[derive(Parser)]
#[command(
    name = "infonav",
    version,
    about = "Target-driven grid navigation: training, evaluation, and verification"
)]
pub struct CliArgs {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test scene sets with a content-hashed manifest.
    GenScenes(GenScenesArgs),
    /// Train a model variant into a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint or baseline policy on a task suite.
    Eval(EvalArgs),
    /// Verify the mutual-information bound on tabular dynamics.
    MiCheck(MiCheckArgs),
    /// Finite-difference check of the full loss gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenScenesArgs {
    /// Output directory for scene files and manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    train: usize,
    #[arg(long, default_value_t = 5)]
    val: usize,
    #[arg(long, default_value_t = 5)]
    test: usize,
    /// Square side lengths, cycled across scenes.
    #[arg(long, value_delimiter = ',', default_values_t = [9usize, 11, 13])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.15)]
    density: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Scene directory produced by gen-scenes.
    #[arg(long)]
    scenes: PathBuf,
    /// Run directory (config, checkpoints, logs).
    #[arg(long)]
    out: PathBuf,
    /// Optional run-config JSON; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    val_every: Option<usize>,
    #[arg(long)]
    val_tasks: Option<usize>,
    #[arg(long)]
    unroll: Option<usize>,
    #[arg(long)]
    target_mode: Option<TargetMode>,
    #[arg(long)]
    z_source: Option<ZSource>,
    #[arg(long)]
    no_curriculum: bool,
    #[arg(long)]
    per_worker_updates: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Model,
    Random,
    Expert,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    Greedy,
    Sample,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scenes: PathBuf,
    /// Report output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = PolicyKind::Model)]
    policy: PolicyKind,
    /// Checkpoint path (required for --policy model).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SceneSplit::Test)]
    split: SceneSplit,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    auto_stop: bool,
    #[arg(long, value_enum, default_value_t = EvalMode::Greedy)]
    mode: EvalMode,
    #[arg(long, default_value_t = 2)]
    min_geo: u32,
}

#[derive(Args)]
struct MiCheckArgs {
    /// Random tabular instances on top of the canonical pair.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long, default_value = "mi_report.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 200)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Variant::Full)]
    variant: Variant,
    #[arg(long)]
    target_mode: Option<TargetMode>,
    /// Corrupt one gradient entry to demonstrate harness sensitivity.
    #[arg(long)]
    fault_injection: bool,
}

impl ValueEnum for SceneSplit {
    fn value_variants<'a>() -> &'a [Self] {
        &[SceneSplit::Train, SceneSplit::Val, SceneSplit::Test]
    }
    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.tag()))
    }
}

/// Parses argv and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match CliArgs::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // Help/version output is not an error.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::GenScenes(a) => cmd_gen_scenes(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::MiCheck(a) => cmd_mi_check(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_gen_scenes(a: GenScenesArgs) -> Result<i32> {
    let cfg = SceneGenConfig {
        seed: a.seed,
        n_train: a.train,
        n_val: a.val,
        n_test: a.test,
        sizes: a.sizes,
        wall_density: a.density,
        ..SceneGenConfig::default()
    };
    let out = resolve_dir(&a.out);
    let manifest = gen_scenes(&cfg, &out)?;
    println!(
        "generated {} train / {} val / {} test scenes in {} (manifest hash {})",
        manifest.n_train,
        manifest.n_val,
        manifest.n_test,
        out.display(),
        manifest.manifest_hash
    );
    Ok(0)
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    let mut cfg = match &a.config {
        Some(path) => {
            let rc: RunConfig = serde_json::from_slice(&fs::read(path)?)?;
            if rc.schema_version != RUN_CONFIG_SCHEMA_VERSION {
                return Err(NavError::Config(format!(
                    "unsupported run-config schema {}",
                    rc.schema_version
                )));
            }
            rc.train
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = a.variant {
        cfg.model.variant = v;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.episodes {
        cfg.max_episodes = e;
        cfg.stage_schedule = [0, e / 8, e / 4, 3 * e / 8];
    }
    if let Some(v) = a.val_every {
        cfg.val_every = v;
    }
    if let Some(v) = a.val_tasks {
        cfg.val_tasks = v;
    }
    if let Some(u) = a.unroll {
        cfg.unroll = u;
    }
    if let Some(t) = a.target_mode {
        cfg.model.target_mode = t;
    }
    if let Some(z) = a.z_source {
        cfg.model.policy_z_source = z;
    }
    if a.no_curriculum {
        cfg.curriculum = false;
    }
    if a.per_worker_updates {
        cfg.per_worker_updates = true;
    }
    cfg.validate()?;

    let scenes_dir = resolve_dir(&a.scenes);
    let out = resolve_dir(&a.out);
    fs::create_dir_all(&out)?;
    let resolved = RunConfig {
        schema_version: RUN_CONFIG_SCHEMA_VERSION,
        scenes_dir: scenes_dir.display().to_string(),
        train: cfg.clone(),
    };
    fs::write(out.join("config.json"), serde_json::to_vec_pretty(&resolved)?)?;

    let train_scenes = load_split(&scenes_dir, SceneSplit::Train)?;
    let val_scenes = load_split(&scenes_dir, SceneSplit::Val)?;
    println!(
        "training {} for {} episodes ({} workers, seed {})",
        cfg.model.variant.name(),
        cfg.max_episodes,
        cfg.workers,
        cfg.seed
    );
    let outcome = train(&cfg, &train_scenes, &val_scenes, &out)?;
    for rec in &outcome.val_log {
        println!(
            "val @ {:>6} episodes: SR {:5.1}%  SPL {:5.1}%",
            rec.episodes, rec.sr, rec.spl
        );
    }
    println!(
        "best: SR {:.1}% SPL {:.1}% at {} episodes -> {}",
        outcome.best.sr,
        outcome.best.spl,
        outcome.best.episodes,
        outcome.best_checkpoint.display()
    );
    Ok(0)
}

fn eval_split(s: SceneSplit) -> Split {
    match s {
        SceneSplit::Train => Split::Train,
        SceneSplit::Val => Split::Val,
        SceneSplit::Test => Split::UnseenKnownTargets,
    }
}

fn cmd_eval(a: EvalArgs) -> Result<i32> {
    let scenes_dir = resolve_dir(&a.scenes);
    let out = resolve_dir(&a.out);
    let scenes = load_split(&scenes_dir, a.split)?;

    // Model/store for the policy; random and expert need neither.
    let loaded: Option<(NavModel, crate::nnet::ParamStore)> = match a.policy {
        PolicyKind::Model => {
            let path = a.checkpoint.as_ref().ok_or_else(|| {
                NavError::Config("--policy model requires --checkpoint".into())
            })?;
            let ckpt = Checkpoint::load(path)?;
            let cfg: ModelConfig = serde_json::from_value(ckpt.model_config.clone())?;
            Some((NavModel::layout(cfg), ckpt.store))
        }
        _ => None,
    };
    let target_mode = loaded
        .as_ref()
        .map(|(m, _)| m.cfg.target_mode)
        .unwrap_or(TargetMode::View);

    let world = crate::world::WorldParams::default();
    let pool = ScenePool::new(scenes, world.render);
    let constraints = TaskConstraints {
        min_geo: a.min_geo,
        target_classes: None,
        target_mode,
    };
    let suite = sample_tasks(&pool, eval_split(a.split), a.n, a.seed, &constraints, &world)?;

    let mut trajs: Vec<Trajectory> = Vec::with_capacity(suite.tasks.len());
    for (i, task) in suite.tasks.iter().enumerate() {
        let rt = pool.runtime(task)?;
        let policy = match (&a.policy, &loaded) {
            (PolicyKind::Model, Some((model, store))) => Policy::Model {
                model,
                store,
                mode: match a.mode {
                    EvalMode::Greedy => ActMode::Greedy,
                    EvalMode::Sample => ActMode::Sample,
                },
            },
            (PolicyKind::Random, _) => Policy::Random,
            (PolicyKind::Expert, _) => Policy::Expert,
            _ => unreachable!("model policy always has a loaded checkpoint"),
        };
        trajs.push(run_episode(
            &policy,
            &rt,
            &world,
            a.auto_stop,
            a.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        )?);
    }
    let report = compute_metrics(&trajs);
    emit_report(&report, &out)?;
    println!(
        "SR {:.1}%  SPL {:.1}%  CR {:.1}%  (n={}, P={:.1}%, auto_stop={})",
        report.sr, report.spl, report.cr, report.n, suite.p_ratio, a.auto_stop
    );
    Ok(0)
}

fn cmd_mi_check(a: MiCheckArgs) -> Result<i32> {
    let rows = mi_sweep(a.instances, a.seed)?;
    let out = resolve_dir(&a.out);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&out, mi_csv(&rows))?;
    let mut ok = true;
    for r in &rows {
        let pass = r.bound_bits <= r.exact_bits + 1e-9;
        ok &= pass;
        println!(
            "{:<12} exact {:8.5} bits  bound {:8.5} bits  gap {:9.2e}  {}",
            r.instance,
            r.exact_bits,
            r.bound_bits,
            r.gap_bits,
            if pass { "ok" } else { "VIOLATION" }
        );
    }
    if !ok {
        return Err(NavError::Numerical(
            "information bound exceeded exact value".into(),
        ));
    }
    println!("{} instances, all bounds hold -> {}", rows.len(), out.display());
    Ok(0)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<i32> {
    let mut cfg = ModelConfig::default();
    cfg.variant = a.variant;
    if let Some(t) = a.target_mode {
        cfg.target_mode = t;
    }
    let report = full_loss_gradcheck(cfg, a.probes, a.seed, a.fault_injection)?;
    for g in &report.groups {
        println!(
            "{:<12} probes {:>4}  max rel err {:10.3e}  {}",
            g.name,
            g.probes,
            g.max_rel_err,
            if g.max_rel_err < 1e-4 { "pass" } else { "FAIL" }
        );
    }
    let passed = report.passed(1e-4);
    if a.fault_injection {
        if passed {
            return Err(NavError::Numerical(
                "injected gradient fault was not detected".into(),
            ));
        }
        println!("injected fault detected (max rel err {:.3e})", report.max_rel_err());
        return Ok(0);
    }
    if !passed {
        return Err(NavError::Numerical(format!(
            "gradient check failed: max rel err {:.3e}",
            report.max_rel_err()
        )));
    }
    println!(
        "all {} parameter groups pass (max rel err {:.3e})",
        report.groups.len(),
        report.max_rel_err()
    );
    Ok(0)
}
