//! Train on a synthetic corpus where clefting fillers always license a gap,
//! and on one where filler and gap are independent, then test the
//! filler x gap interaction on the clefting paradigm under each model.
//!
//!     cargo run --release --example directional_replication -- [tokens] [epochs] [items]

use gaplab::corpus::{builtin_grammar, synth_corpus, DependencyMode, Vocab};
use gaplab::neural_lm::{evaluate_perplexity, sequence_surprisal, train, unigram_perplexity, LmConfig};
use gaplab::scoring::score_items;
use gaplab::stats::basic_licensing_test;
use gaplab::stimgen::{bind_lexicon, builtin_lexicon, builtin_template};
use gaplab::Construction;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let tokens: usize = args.next().map_or(Ok(1_000_000), |a| a.parse())?;
    let epochs: usize = args.next().map_or(Ok(4), |a| a.parse())?;
    let n_items: usize = args.next().map_or(Ok(486), |a| a.parse())?;

    let c = Construction::Clefting;
    let items = bind_lexicon(builtin_template(c), builtin_lexicon(c), n_items, 11)?;
    for mode in [DependencyMode::Enforced, DependencyMode::Absent] {
        let mut grammar = builtin_grammar();
        grammar.construction_mut("clefting").expect("clefting in grammar").dependency = mode;
        let split = synth_corpus(&grammar, tokens, 7)?;
        let vocab = Vocab::build(&split.train, 10_000)?;
        let encoded = split.encode(&vocab);
        let config = LmConfig { max_epochs: epochs, ..LmConfig::desk() };
        let started = std::time::Instant::now();
        let (params, _) = train(&config, &encoded, vocab.len())?;
        let ppl = evaluate_perplexity(&params, &encoded.valid)?;
        let unigram = unigram_perplexity(&encoded.train, &encoded.valid, vocab.len())?;
        let scores = score_items(&items, |t| sequence_surprisal(&params, &vocab, t, true))?;
        let (fit, _) = basic_licensing_test(&scores, c, 0.05)?;
        let fg = fit.term("filler:gap").expect("interaction term");
        println!(
            "{mode:?}: valid ppl {ppl:.3} (unigram {unigram:.3}), filler:gap {:.4} (se {:.4}, p {:.3e}), {:.0}s",
            fg.estimate,
            fg.se,
            fg.p,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
