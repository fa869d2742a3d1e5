use serde::{Deserialize, Serialize};

use super::{LmError, Result};
use crate::corpus::BatchPlan;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout_prob: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub bptt_len: usize,
    pub grad_clip_norm: f64,
    pub anneal_factor: f64,
    pub seed: u64,
}

impl LmConfig {
    /// Small enough to train on a laptop CPU in minutes.
    pub fn desk() -> Self {
        LmConfig {
            embed_dim: 64,
            hidden_dim: 128,
            num_layers: 2,
            dropout_prob: 0.2,
            batch_size: 32,
            learning_rate: 20.0,
            max_epochs: 10,
            bptt_len: 35,
            grad_clip_norm: 0.25,
            anneal_factor: 4.0,
            seed: 1111,
        }
    }

    /// The full-size configuration: 650-unit embeddings and hidden layers,
    /// two layers, batch 128, 40 epochs.
    pub fn full() -> Self {
        LmConfig {
            embed_dim: 650,
            hidden_dim: 650,
            num_layers: 2,
            dropout_prob: 0.2,
            batch_size: 128,
            learning_rate: 20.0,
            max_epochs: 40,
            bptt_len: 35,
            grad_clip_norm: 0.25,
            anneal_factor: 4.0,
            seed: 1111,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full" => Some(Self::full()),
            _ => None,
        }
    }

    pub fn batch_plan(&self) -> BatchPlan {
        BatchPlan {
            batch_size: self.batch_size,
            bptt_len: self.bptt_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LmError::Config(m.to_string()));
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.num_layers == 0 {
            return bad("embed_dim, hidden_dim and num_layers must be >= 1");
        }
        if self.batch_size == 0 || self.bptt_len == 0 {
            return bad("batch_size and bptt_len must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return bad("dropout_prob must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad("grad_clip_norm must be positive");
        }
        if !(self.anneal_factor >= 1.0) {
            return bad("anneal_factor must be >= 1");
        }
        Ok(())
    }
}

impl Default for LmConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        LmConfig::desk().validate().unwrap();
        let p = LmConfig::full();
        p.validate().unwrap();
        assert_eq!((p.embed_dim, p.hidden_dim, p.num_layers, p.batch_size, p.max_epochs), (650, 650, 2, 128, 40));
        assert_eq!(p.learning_rate, 20.0);
        assert_eq!(p.dropout_prob, 0.2);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = LmConfig::desk();
        c.dropout_prob = 1.0;
        assert!(c.validate().is_err());
        let mut c = LmConfig::desk();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = LmConfig::desk();
        c.hidden_dim = 0;
        assert!(c.validate().is_err());
    }
}
