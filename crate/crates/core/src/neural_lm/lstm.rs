use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Float, LmError, LmParameters, LstmLayer, Result};
use crate::corpus::Batch;

/// Per-layer hidden and cell state, each `batch x H`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<F> {
    pub h: Vec<Array2<F>>,
    pub c: Vec<Array2<F>>,
}

impl<F: Float> LstmState<F> {
    pub fn zeros(params: &LmParameters<F>, batch_size: usize) -> Self {
        let hd = params.hidden_dim();
        LstmState {
            h: vec![Array2::zeros((batch_size, hd)); params.num_layers()],
            c: vec![Array2::zeros((batch_size, hd)); params.num_layers()],
        }
    }

    pub fn batch_size(&self) -> usize {
        self.h.first().map_or(0, |h| h.nrows())
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - p)`.
pub struct Dropout {
    p: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Self {
        Dropout {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn mask<F: Float>(&mut self, rows: usize, cols: usize) -> Option<Array2<F>> {
        if self.p <= 0.0 {
            return None;
        }
        let keep = F::from_f64(1.0 / (1.0 - self.p)).unwrap();
        let p = self.p;
        Some(Array2::from_shape_simple_fn((rows, cols), || {
            if self.rng.gen::<f64>() < p {
                F::zero()
            } else {
                keep
            }
        }))
    }
}

struct LayerTrace<F> {
    /// Layer input after dropout, `N x in`.
    input: Array2<F>,
    /// Gate activations, `N x 4H`.
    gates: Array2<F>,
    cells: Array2<F>,
    hidden: Array2<F>,
    h0: Array2<F>,
    c0: Array2<F>,
}

struct Trace<F> {
    masks: Vec<Option<Array2<F>>>,
    layers: Vec<LayerTrace<F>>,
}

#[inline]
fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

fn embed<F: Float>(params: &LmParameters<F>, ids: &[u32]) -> Result<Array2<F>> {
    let v = params.vocab_size();
    let mut x = Array2::zeros((ids.len(), params.embed_dim()));
    for (r, &id) in ids.iter().enumerate() {
        if id as usize >= v {
            return Err(LmError::IdOutOfRange { id, vocab_size: v });
        }
        x.row_mut(r).assign(&params.embedding.row(id as usize));
    }
    Ok(x)
}

fn layer_forward<F: Float>(
    layer: &LstmLayer<F>,
    input: Array2<F>,
    batch: usize,
    h0: &Array2<F>,
    c0: &Array2<F>,
) -> LayerTrace<F> {
    let n = input.nrows();
    let hd = layer.hidden_dim();
    let mut gates = input.dot(&layer.w_ih);
    gates += &layer.bias;
    let mut cells = Array2::<F>::zeros((n, hd));
    let mut hidden = Array2::<F>::zeros((n, hd));

    for t in 0..n / batch {
        let r0 = t * batch;
        {
            let mut g = gates.slice_mut(s![r0..r0 + batch, ..]);
            if t == 0 {
                general_mat_mul(F::one(), h0, &layer.w_hh, F::one(), &mut g);
            } else {
                let prev = hidden.slice(s![r0 - batch..r0, ..]);
                general_mat_mul(F::one(), &prev, &layer.w_hh, F::one(), &mut g);
            }
        }
        let gs = gates.as_slice_mut().unwrap();
        let cs = cells.as_slice_mut().unwrap();
        let hs = hidden.as_slice_mut().unwrap();
        for b in 0..batch {
            let r = r0 + b;
            let g = &mut gs[r * 4 * hd..(r + 1) * 4 * hd];
            for j in 0..hd {
                let i = sigmoid(g[j]);
                let f = sigmoid(g[hd + j]);
                let cand = g[2 * hd + j].tanh();
                let o = sigmoid(g[3 * hd + j]);
                g[j] = i;
                g[hd + j] = f;
                g[2 * hd + j] = cand;
                g[3 * hd + j] = o;
                let c_prev = if t == 0 { c0[[b, j]] } else { cs[(r - batch) * hd + j] };
                let c = f * c_prev + i * cand;
                cs[r * hd + j] = c;
                hs[r * hd + j] = o * c.tanh();
            }
        }
    }
    LayerTrace {
        input,
        gates,
        cells,
        hidden,
        h0: h0.clone(),
        c0: c0.clone(),
    }
}

/// Backward through one layer for a whole window. Accumulates weight
/// gradients into `grad` and returns the gradient w.r.t. the layer input.
fn layer_backward<F: Float>(
    layer: &LstmLayer<F>,
    tr: &LayerTrace<F>,
    batch: usize,
    d_hidden: &Array2<F>,
    grad: &mut LstmLayer<F>,
) -> Array2<F> {
    let n = tr.gates.nrows();
    let hd = layer.hidden_dim();
    let one = F::one();
    let mut dgates = Array2::<F>::zeros((n, 4 * hd));
    let mut dh_next = Array2::<F>::zeros((batch, hd));
    let mut dc_next = Array2::<F>::zeros((batch, hd));
    let gs = tr.gates.as_slice().unwrap();
    let cs = tr.cells.as_slice().unwrap();
    let dhs = d_hidden.as_slice().unwrap();

    for t in (0..n / batch).rev() {
        let r0 = t * batch;
        {
            let dg = dgates.as_slice_mut().unwrap();
            let dhn = dh_next.as_slice().unwrap();
            let dcn = dc_next.as_slice_mut().unwrap();
            for b in 0..batch {
                let r = r0 + b;
                let g = &gs[r * 4 * hd..(r + 1) * 4 * hd];
                let d = &mut dg[r * 4 * hd..(r + 1) * 4 * hd];
                for j in 0..hd {
                    let (i, f, cand, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                    let tc = cs[r * hd + j].tanh();
                    let c_prev = if t == 0 { tr.c0[[b, j]] } else { cs[(r - batch) * hd + j] };
                    let dh = dhs[r * hd + j] + dhn[b * hd + j];
                    let dc = dh * o * (one - tc * tc) + dcn[b * hd + j];
                    d[j] = dc * cand * i * (one - i);
                    d[hd + j] = dc * c_prev * f * (one - f);
                    d[2 * hd + j] = dc * i * (one - cand * cand);
                    d[3 * hd + j] = dh * tc * o * (one - o);
                    dcn[b * hd + j] = dc * f;
                }
            }
        }
        if t > 0 {
            let dg_t = dgates.slice(s![r0..r0 + batch, ..]);
            general_mat_mul(one, &dg_t, &layer.w_hh.t(), F::zero(), &mut dh_next);
        }
    }

    // Row r of h_prev is the hidden state that fed step r.
    let mut h_prev = Array2::<F>::zeros((n, hd));
    h_prev.slice_mut(s![0..batch, ..]).assign(&tr.h0);
    if n > batch {
        h_prev
            .slice_mut(s![batch.., ..])
            .assign(&tr.hidden.slice(s![..n - batch, ..]));
    }
    general_mat_mul(one, &h_prev.t(), &dgates, one, &mut grad.w_hh);
    general_mat_mul(one, &tr.input.t(), &dgates, one, &mut grad.w_ih);
    grad.bias += &dgates.sum_axis(Axis(0));
    dgates.dot(&layer.w_ih.t())
}

fn check_state<F: Float>(params: &LmParameters<F>, state: &LstmState<F>, batch: usize) -> Result<()> {
    let ok = state.h.len() == params.num_layers()
        && state.c.len() == params.num_layers()
        && state
            .h
            .iter()
            .chain(&state.c)
            .all(|a| a.dim() == (batch, params.hidden_dim()));
    if ok {
        Ok(())
    } else {
        Err(LmError::Config(format!(
            "recurrent state does not match {} layers x ({batch} x {})",
            params.num_layers(),
            params.hidden_dim()
        )))
    }
}

fn forward_traced<F: Float>(
    params: &LmParameters<F>,
    ids: &[u32],
    batch: usize,
    state: &LstmState<F>,
    mut dropout: Option<&mut Dropout>,
) -> Result<(Array2<F>, LstmState<F>, Trace<F>)> {
    if batch == 0 || ids.is_empty() || ids.len() % batch != 0 {
        return Err(LmError::Config(format!(
            "{} ids do not form whole steps of batch {batch}",
            ids.len()
        )));
    }
    check_state(params, state, batch)?;
    let n = ids.len();
    let mut x = embed(params, ids)?;
    let mut masks = Vec::with_capacity(params.num_layers());
    let mut layers: Vec<LayerTrace<F>> = Vec::with_capacity(params.num_layers());
    for (l, layer) in params.layers.iter().enumerate() {
        let mask = dropout.as_deref_mut().and_then(|d| d.mask::<F>(x.nrows(), x.ncols()));
        if let Some(m) = &mask {
            x *= m;
        }
        masks.push(mask);
        let tr = layer_forward(layer, x, batch, &state.h[l], &state.c[l]);
        x = tr.hidden.clone();
        layers.push(tr);
    }
    let mut logits = x.dot(&params.out_w);
    logits += &params.out_b;
    let last = s![n - batch.., ..];
    let new_state = LstmState {
        h: layers.iter().map(|t| t.hidden.slice(last).to_owned()).collect(),
        c: layers.iter().map(|t| t.cells.slice(last).to_owned()).collect(),
    };
    Ok((logits, new_state, Trace { masks, layers }))
}

/// Runs `ids.len() / batch` time steps (time-major ids) and returns the
/// `N x V` logits plus the state after the last step. Eval mode.
pub fn forward_window<F: Float>(
    params: &LmParameters<F>,
    ids: &[u32],
    batch: usize,
    state: &LstmState<F>,
) -> Result<(Array2<F>, LstmState<F>)> {
    let (logits, state, _) = forward_traced(params, ids, batch, state, None)?;
    Ok((logits, state))
}

/// One time step for a batch of ids. Dropout is applied only when a
/// [`Dropout`] source is given.
pub fn forward_step<F: Float>(
    params: &LmParameters<F>,
    ids: &[u32],
    state: &LstmState<F>,
    dropout: Option<&mut Dropout>,
) -> Result<(Array2<F>, LstmState<F>)> {
    let (logits, state, _) = forward_traced(params, ids, ids.len(), state, dropout)?;
    Ok((logits, state))
}

/// Mean cross-entropy (nats) of a window and its gradient. Gradients do
/// not flow into `state`; the returned state is the carry for the next
/// window.
pub fn loss_and_grad<F: Float>(
    params: &LmParameters<F>,
    batch: &Batch,
    state: &LstmState<F>,
    dropout: Option<&mut Dropout>,
) -> Result<(f64, LmParameters<F>, LstmState<F>)> {
    let (mut d, new_state, trace) =
        forward_traced(params, &batch.inputs, batch.batch_size, state, dropout)?;
    let n = d.nrows();
    let v = params.vocab_size();
    let inv_n = F::from_f64(1.0 / n as f64).unwrap();
    let mut loss = 0.0f64;
    for (r, mut row) in d.rows_mut().into_iter().enumerate() {
        let target = batch.targets[r] as usize;
        if target >= v {
            return Err(LmError::IdOutOfRange {
                id: batch.targets[r],
                vocab_size: v,
            });
        }
        let row = row.as_slice_mut().unwrap();
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let z = row[target] - max;
        let mut sum = F::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        loss += (sum.ln() - z).to_f64().unwrap();
        let scale = inv_n / sum;
        for x in row.iter_mut() {
            *x *= scale;
        }
        row[target] -= inv_n;
    }
    loss /= n as f64;

    let mut grads = params.zeros_like();
    let top = &trace.layers.last().unwrap().hidden;
    general_mat_mul(F::one(), &top.t(), &d, F::zero(), &mut grads.out_w);
    grads.out_b = d.sum_axis(Axis(0));
    let mut dh = d.dot(&params.out_w.t());
    for l in (0..params.num_layers()).rev() {
        let mut dx = layer_backward(
            &params.layers[l],
            &trace.layers[l],
            batch.batch_size,
            &dh,
            &mut grads.layers[l],
        );
        if let Some(m) = &trace.masks[l] {
            dx *= m;
        }
        dh = dx;
    }
    for (r, &id) in batch.inputs.iter().enumerate() {
        let mut row = grads.embedding.row_mut(id as usize);
        row += &dh.row(r);
    }
    Ok((loss, grads, new_state))
}
