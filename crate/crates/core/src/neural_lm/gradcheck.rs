use serde::Serialize;

use super::{loss_and_grad, LmConfig, LmError, LmParameters, LstmState, Result};
use crate::corpus::Batch;

const STEP: f64 = 1e-3;
const MAX_DIM: usize = 8;
/// Gradients smaller than this are compared on an absolute scale.
const FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and flat index where the maximum occurred.
    pub worst: (String, usize),
    pub checked: usize,
}

fn loss(params: &LmParameters<f64>, sample: &Batch) -> Result<f64> {
    let state = LstmState::zeros(params, sample.batch_size);
    Ok(loss_and_grad(params, sample, &state, None)?.0)
}

/// Compares backpropagated gradients of the mean cross-entropy on `sample`
/// against central finite differences in `f64`. The difference quotient is
/// the fourth-order central stencil with step `1e-3`.
///
/// Relative error per entry is `|a - n| / max(|a|, |n|, 1e-4)`. Below the
/// floor, rounding noise in the loss (about 1e-13 at this step) would
/// otherwise dominate the ratio.
pub fn gradient_check(config: &LmConfig, sample: &Batch, vocab_size: usize) -> Result<GradCheckReport> {
    config.validate()?;
    if config.dropout_prob > 0.0 {
        return Err(LmError::GradCheckPrecondition("dropout_prob = 0".into()));
    }
    if config.embed_dim > MAX_DIM || config.hidden_dim > MAX_DIM {
        return Err(LmError::GradCheckPrecondition(format!(
            "embed_dim and hidden_dim <= {MAX_DIM}"
        )));
    }
    let mut params: LmParameters<f64> = LmParameters::init(config, vocab_size);
    let state = LstmState::zeros(&params, sample.batch_size);
    let (_, grads, _) = loss_and_grad(&params, sample, &state, None)?;

    let names: Vec<String> = params.tensors().into_iter().map(|t| t.name).collect();
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(|t| t.data.to_vec()).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (names[0].clone(), 0),
        checked: 0,
    };
    for (k, name) in names.iter().enumerate() {
        for idx in 0..analytic[k].len() {
            let mut at = |delta: f64| -> Result<f64> {
                let orig = params.tensors_mut()[k][idx];
                params.tensors_mut()[k][idx] = orig + delta;
                let l = loss(&params, sample);
                params.tensors_mut()[k][idx] = orig;
                l
            };
            let (p1, m1) = (at(STEP)?, at(-STEP)?);
            let (p2, m2) = (at(2.0 * STEP)?, at(-2.0 * STEP)?);
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * STEP);
            let a = analytic[k][idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (name.clone(), idx);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
