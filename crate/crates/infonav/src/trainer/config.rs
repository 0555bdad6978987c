//! Training-run configuration.

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::navmodel::{LossWeights, ModelConfig};
use crate::nnet::RmsPropConfig;
use crate::world::WorldParams;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub optimizer: RmsPropConfig,
    pub world: WorldParams,
    /// Concurrent rollout workers; one unroll per worker per update.
    pub workers: usize,
    /// Rollout horizon per worker between updates.
    pub unroll: usize,
    pub seed: u64,
    pub max_episodes: usize,
    /// Validation cadence in episodes.
    pub val_every: usize,
    /// Validation suite size.
    pub val_tasks: usize,
    pub grad_clip: f64,
    /// Progressive scene-pool staging by difficulty quartile.
    pub curriculum: bool,
    /// Episode thresholds at which stages 1..=4 open (ignored when the
    /// curriculum is disabled). Must be non-decreasing, first entry 0.
    pub stage_schedule: [usize; 4],
    /// Apply each worker's gradient separately instead of one aggregated
    /// batch per round.
    pub per_worker_updates: bool,
    /// Minimum start geodesic distance for sampled training tasks.
    pub min_geo: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let max_episodes = 6000;
        TrainConfig {
            model: ModelConfig::default(),
            weights: LossWeights::default(),
            optimizer: RmsPropConfig::default(),
            world: WorldParams::default(),
            workers: 6,
            unroll: 10,
            seed: 0,
            max_episodes,
            val_every: 200,
            val_tasks: 50,
            grad_clip: 40.0,
            curriculum: true,
            stage_schedule: [
                0,
                max_episodes / 8,
                max_episodes / 4,
                3 * max_episodes / 8,
            ],
            per_worker_updates: false,
            min_geo: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers < 1 {
            return Err(NavError::Config("workers must be >= 1".into()));
        }
        if self.unroll < 1 {
            return Err(NavError::Config("unroll must be >= 1".into()));
        }
        let w = &self.weights;
        if w.alpha < 0.0 || w.beta < 0.0 || w.gamma < 0.0 || w.omega < 0.0 {
            return Err(NavError::Config("loss weights must be >= 0".into()));
        }
        if !(0.0 < w.tau && w.tau <= 1.0) {
            return Err(NavError::Config("tau must be in (0, 1]".into()));
        }
        if self.val_every == 0 || self.val_tasks == 0 {
            return Err(NavError::Config("validation cadence/size must be > 0".into()));
        }
        if self.stage_schedule.windows(2).any(|w| w[0] > w[1]) || self.stage_schedule[0] != 0 {
            return Err(NavError::Config(
                "stage schedule must start at 0 and be non-decreasing".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn bad_configs_rejected() {
        let mut c = TrainConfig::default();
        c.workers = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.weights.omega = -1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.stage_schedule = [0, 10, 5, 20];
        assert!(c.validate().is_err());
    }
}
