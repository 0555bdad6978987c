use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum NavError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scene generation failed: {0}")]
    SceneGeneration(String),

    #[error("goal unreachable from ({x}, {y}) in scene {scene_id}")]
    Unreachable { scene_id: u64, x: i32, y: i32 },

    #[error("task sampling failed: {0}")]
    TaskSampling(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NavError>;
