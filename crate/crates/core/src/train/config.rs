use serde::{Deserialize, Serialize};

use super::optim::{AdamConfig, OptimizerKind};
use super::schedule::PlateauConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub adam: AdamConfig,
    /// Minibatch size for sequence tasks; node tasks always use the full graph.
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub scheduler: Option<PlateauConfig>,
    pub early_stopping_patience: Option<usize>,
    /// Sequence regression only: train the scalar output at unit scale by
    /// fixing the output map to the training targets' mean and deviation.
    pub standardize_targets: bool,
    pub seed: u64,
}

impl TrainConfig {
    /// Adam, lr 5e-4, batch 128, 300 epochs, no decay or scheduling.
    pub fn sequence_default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 5e-4,
            momentum: 0.9,
            adam: AdamConfig::default(),
            batch_size: 128,
            epochs: 300,
            weight_decay: 0.0,
            scheduler: None,
            early_stopping_patience: None,
            standardize_targets: true,
            seed: 0,
        }
    }

    /// Full-batch Adam, lr 5e-3, weight decay 5e-4, early stopping after
    /// 200 stale epochs.
    pub fn node_default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 5e-3,
            momentum: 0.9,
            adam: AdamConfig::default(),
            batch_size: 0,
            epochs: 1000,
            weight_decay: 5e-4,
            scheduler: None,
            early_stopping_patience: Some(200),
            standardize_targets: false,
            seed: 0,
        }
    }

    /// A learning rate of exactly zero is accepted: it turns training into
    /// repeated evaluation, which the determinism checks rely on.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and ≥ 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad("Adam needs betas in [0, 1) and epsilon > 0".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be ≥ 0, got {}", self.weight_decay));
        }
        if let Some(s) = &self.scheduler {
            if s.patience == 0 || !(s.factor > 0.0 && s.factor <= 1.0) {
                return bad("scheduler needs patience ≥ 1 and factor in (0, 1]".into());
            }
        }
        if self.early_stopping_patience == Some(0) {
            return bad("early stopping patience must be ≥ 1".into());
        }
        Ok(())
    }

    pub(crate) fn validate_batched(&self) -> Result<()> {
        self.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        Ok(())
    }
}
