use std::f64::consts::LN_2;


use super::{forward_window, Float, LmError, LmParameters, LstmState, Result};
use crate::corpus::Vocab;

const CHUNK: usize = 64;

/// Negative log-likelihood in nats of every id in `ids`, each conditioned
/// on `<eos>` followed by the ids before it. Eval mode, fresh state,
/// processed in chunks with the recurrent state carried across.
pub fn stream_nll<F: Float>(params: &LmParameters<F>, ids: &[u32]) -> Result<Vec<f64>> {
    let v = params.vocab_size();
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= v) {
        return Err(LmError::IdOutOfRange { id, vocab_size: v });
    }
    let mut inputs = Vec::with_capacity(ids.len());
    inputs.push(Vocab::EOS);
    inputs.extend_from_slice(&ids[..ids.len().saturating_sub(1)]);

    let mut out = Vec::with_capacity(ids.len());
    let mut state = LstmState::zeros(params, 1);
    for (chunk_in, chunk_tgt) in inputs.chunks(CHUNK).zip(ids.chunks(CHUNK)) {
        let (logits, next) = forward_window(params, chunk_in, 1, &state)?;
        state = next;
        for (row, &target) in logits.rows().into_iter().zip(chunk_tgt) {
            let row: Vec<f64> = row.iter().map(|x| x.to_f64().unwrap()).collect();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            out.push(lse - row[target as usize]);
        }
    }
    Ok(out)
}

/// Per-token surprisal in bits for one sentence, from a fresh state with
/// `<eos>` as the only left context. With `strict`, out-of-vocabulary
/// tokens are an error; otherwise they are scored as `<unk>`.
pub fn sequence_surprisal<F: Float>(
    params: &LmParameters<F>,
    vocab: &Vocab,
    tokens: &[String],
    strict: bool,
) -> Result<Vec<f64>> {
    let mut ids = Vec::with_capacity(tokens.len());
    for t in tokens {
        match vocab.id(t) {
            Some(id) => ids.push(id),
            None if strict => return Err(LmError::OutOfVocabulary(t.clone())),
            None => ids.push(Vocab::UNK),
        }
    }
    Ok(stream_nll(params, &ids)?.into_iter().map(|n| n / LN_2).collect())
}

/// Total negative log-likelihood of a sentence in nats.
pub fn sequence_nll<F: Float>(params: &LmParameters<F>, vocab: &Vocab, tokens: &[String]) -> Result<f64> {
    let ids: Vec<u32> = tokens.iter().map(|t| vocab.id(t).unwrap_or(Vocab::UNK)).collect();
    Ok(stream_nll(params, &ids)?.iter().sum())
}

/// `exp(mean cross-entropy)` over a token stream, every token predicted
/// from the tokens before it with an implicit leading `<eos>`.
pub fn evaluate_perplexity<F: Float>(params: &LmParameters<F>, stream: &[u32]) -> Result<f64> {
    if stream.is_empty() {
        return Err(LmError::EmptySplit);
    }
    let nll = stream_nll(params, stream)?;
    Ok((nll.iter().sum::<f64>() / nll.len() as f64).exp())
}

/// Perplexity on `eval` of an add-one smoothed unigram model counted on
/// `train`.
pub fn unigram_perplexity(train: &[u32], eval: &[u32], vocab_size: usize) -> Result<f64> {
    if eval.is_empty() {
        return Err(LmError::EmptySplit);
    }
    let mut counts = vec![1.0f64; vocab_size];
    for &id in train {
        if id as usize >= vocab_size {
            return Err(LmError::IdOutOfRange { id, vocab_size });
        }
        counts[id as usize] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    let mut nll = 0.0;
    for &id in eval {
        let c = counts
            .get(id as usize)
            .ok_or(LmError::IdOutOfRange { id, vocab_size })?;
        nll -= (c / total).ln();
    }
    Ok((nll / eval.len() as f64).exp())
}
