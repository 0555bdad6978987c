//! Evaluation toolkit: task sampling, episode rollout, metrics,
//! information-bound verification, and report emission.

pub mod metrics;
pub mod mi;
pub mod report;
pub mod runner;
pub mod tasks;

pub use metrics::{compute_metrics, BinStat, EvalReport, SubsetStats};
pub use mi::{mi_bound, mi_exact, mi_sweep, Classifier, MiRow, TabularDynamics};
pub use report::{bins_csv, emit_report, mi_csv, svg_line_chart, validate_svg};
pub use runner::{run_episode, Policy, Trajectory};
pub use tasks::{sample_tasks, ScenePool, Split, TaskConstraints, TaskSuite};
