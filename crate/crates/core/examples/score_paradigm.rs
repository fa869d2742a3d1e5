//! Train a small LSTM, score a paradigm set and classify the filler-effect
//! pattern per construction.
//!
//!     cargo run --release --example score_paradigm -- [tokens] [items]

use gaplab::corpus::{builtin_grammar, synth_corpus, Vocab};
use gaplab::neural_lm::{sequence_surprisal, train, LmConfig};
use gaplab::scoring::{classify_pattern, compute_effects, effect_summary, score_items};
use gaplab::stimgen::{bind_lexicon, builtin_lexicon, builtin_template};
use gaplab::Construction;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let tokens: usize = args.next().map_or(Ok(200_000), |a| a.parse())?;
    let n_items: usize = args.next().map_or(Ok(24), |a| a.parse())?;

    let split = synth_corpus(&builtin_grammar(), tokens, 7)?;
    let vocab = Vocab::build(&split.train, 10_000)?;
    let config = LmConfig { max_epochs: 1, ..LmConfig::desk() };
    let (params, _) = train(&config, &split.encode(&vocab), vocab.len())?;

    let mut scores = Vec::new();
    for c in Construction::ALL {
        let items = bind_lexicon(builtin_template(c), builtin_lexicon(c), n_items, 11)?;
        scores.extend(score_items(&items, |t| sequence_surprisal(&params, &vocab, t, false))?);
    }
    let summaries = effect_summary(&compute_effects(&scores)?)?;
    for s in &summaries {
        println!(
            "{:<28} gap {} island {}  filler effect {:>7.3} ± {:.3} bits",
            s.construction.label(),
            s.gap,
            s.island,
            s.mean,
            s.ci_half_width
        );
    }
    for v in classify_pattern(&summaries)? {
        let island = v.island.map_or("not tested".to_string(), |i| {
            format!("stringent {}, relative {}", i.stringent(), i.relative())
        });
        println!("{}: simple learned {}, islands {island}", v.construction.label(), v.simple_learned);
    }
    Ok(())
}
