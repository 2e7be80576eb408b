use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub batch_size: usize,
    /// Epochs of the joint (second-stage) training.
    pub epochs: usize,
    /// Epochs of phrase-decoder pre-training.
    pub stage1_epochs: usize,
    pub dropout_rate: f64,
    /// Global gradient-norm cap; 0 disables clipping.
    pub clip_norm: f64,
    /// Hidden/embedding size K.
    pub hidden_size: usize,
    pub min_count: usize,
    pub init_scale: f64,
    /// Return the parameters of the epoch with the lowest validation
    /// perplexity instead of the last epoch.
    pub keep_best_val: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            batch_size: 300,
            epochs: 20,
            stage1_epochs: 10,
            dropout_rate: 0.5,
            clip_norm: 5.0,
            hidden_size: 256,
            min_count: 5,
            init_scale: crate::model::INIT_SCALE,
            keep_best_val: true,
            seed: 1234,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Contract(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return bad("rmsprop_decay must be in [0, 1)");
        }
        if self.rmsprop_epsilon.is_nan() || self.rmsprop_epsilon <= 0.0 {
            return bad("rmsprop_epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if self.batch_size == 0 || self.hidden_size == 0 || self.min_count == 0 {
            return bad("batch_size, hidden_size and min_count must be at least 1");
        }
        if self.clip_norm.is_nan() || self.clip_norm < 0.0 || self.init_scale.is_nan() || self.init_scale < 0.0 {
            return bad("clip_norm and init_scale must be non-negative");
        }
        Ok(())
    }
}
