use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{loss_and_grad, stream_nll, Dropout, LmConfig, LmError, LmParameters, LstmState, Result};
use crate::corpus::{batchify, EncodedCorpus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training cross-entropy, nats per token.
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Rate used during this epoch.
    pub learning_rate: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    pub fn best_valid_perplexity(&self) -> Option<f64> {
        self.best().map(|e| e.valid_loss.exp())
    }
}

/// Truncated-BPTT SGD with gradient-norm clipping. The learning rate is
/// divided by `anneal_factor` after every epoch whose validation loss does
/// not beat the best so far. Returns the best-validation parameters.
pub fn train(config: &LmConfig, corpus: &EncodedCorpus, vocab_size: usize) -> Result<(LmParameters<f32>, TrainingLog)> {
    config.validate()?;
    if corpus.valid.is_empty() {
        return Err(LmError::EmptySplit);
    }
    let batches = batchify(&corpus.train, config.batch_plan())?;
    let mut params: LmParameters<f32> = LmParameters::init(config, vocab_size);
    let mut dropout = Dropout::new(config.dropout_prob, config.seed.wrapping_add(0x9e37_79b9));
    let mut lr = config.learning_rate;
    let mut best: Option<(f64, LmParameters<f32>)> = None;
    let mut log = TrainingLog::default();

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut state = LstmState::zeros(&params, config.batch_size);
        let mut total = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let (loss, grads, next) = loss_and_grad(&params, batch, &state, Some(&mut dropout))?;
            if !loss.is_finite() {
                return Err(LmError::Diverged { epoch, batch: bi });
            }
            state = next;
            let norm = grads.squared_norm().sqrt();
            let scale = if norm > config.grad_clip_norm {
                config.grad_clip_norm / norm
            } else {
                1.0
            };
            params.add_scaled((-lr * scale) as f32, &grads);
            total += loss;
            if (bi + 1) % 200 == 0 {
                log::debug!("epoch {epoch} batch {}/{} loss {:.3}", bi + 1, batches.len(), total / (bi + 1) as f64);
            }
        }
        let train_loss = total / batches.len() as f64;
        let nll = stream_nll(&params, &corpus.valid)?;
        let valid_loss = nll.iter().sum::<f64>() / nll.len() as f64;
        if !valid_loss.is_finite() || !params.all_finite() {
            return Err(LmError::Diverged {
                epoch,
                batch: batches.len(),
            });
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            learning_rate: lr,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        log::info!(
            "epoch {epoch}: train ppl {:.2}, valid ppl {:.2}, lr {lr}",
            train_loss.exp(),
            valid_loss.exp()
        );
        if best.as_ref().map_or(true, |(b, _)| valid_loss < *b) {
            best = Some((valid_loss, params.clone()));
            log.best_epoch = epoch;
        } else {
            lr /= config.anneal_factor;
        }
    }
    let params = best.map(|(_, p)| p).unwrap_or(params);
    Ok((params, log))
}
