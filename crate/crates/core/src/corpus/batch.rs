use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    /// Truncation window in tokens.
    pub bptt_len: usize,
}

/// A time-major window: element `t * batch_size + b` is row `b` at step `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub seq_len: usize,
    pub batch_size: usize,
    pub inputs: Vec<u32>,
    pub targets: Vec<u32>,
}

/// Contiguous-stream batching: the stream is cut into `batch_size` rows of
/// `len / batch_size` tokens (remainder dropped) and the rows are walked in
/// windows of `bptt_len`. Targets are the inputs shifted by one.
pub fn batchify(stream: &[u32], plan: BatchPlan) -> Result<Vec<Batch>> {
    if plan.batch_size == 0 || plan.bptt_len == 0 {
        return Err(CorpusError::BadBatchPlan);
    }
    let need = plan.batch_size * 2;
    if stream.len() < need {
        return Err(CorpusError::StreamTooShort {
            len: stream.len(),
            batch_size: plan.batch_size,
            need,
        });
    }
    let row_len = stream.len() / plan.batch_size;
    let rows: Vec<&[u32]> = stream.chunks_exact(row_len).take(plan.batch_size).collect();
    let mut batches = Vec::new();
    let mut start = 0;
    while start + 1 < row_len {
        let seq_len = plan.bptt_len.min(row_len - 1 - start);
        let mut inputs = Vec::with_capacity(seq_len * plan.batch_size);
        let mut targets = Vec::with_capacity(seq_len * plan.batch_size);
        for t in 0..seq_len {
            for row in &rows {
                inputs.push(row[start + t]);
                targets.push(row[start + t + 1]);
            }
        }
        batches.push(Batch {
            seq_len,
            batch_size: plan.batch_size,
            inputs,
            targets,
        });
        start += seq_len;
    }
    Ok(batches)
}
