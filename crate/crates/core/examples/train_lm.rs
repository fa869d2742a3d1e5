//! Train the desk-size LSTM on a synthetic corpus and report perplexity
//! against the unigram baseline.
//!
//!     cargo run --release --example train_lm -- [tokens] [epochs]

use gaplab::corpus::{builtin_grammar, synth_corpus, Vocab};
use gaplab::neural_lm::{evaluate_perplexity, train, unigram_perplexity, LmConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let tokens: usize = args.next().map_or(Ok(200_000), |a| a.parse())?;
    let epochs: usize = args.next().map_or(Ok(2), |a| a.parse())?;

    let split = synth_corpus(&builtin_grammar(), tokens, 7)?;
    let vocab = Vocab::build(&split.train, 10_000)?;
    let encoded = split.encode(&vocab);
    println!("{} train tokens, vocabulary {}", encoded.train.len(), vocab.len());

    let config = LmConfig {
        max_epochs: epochs,
        ..LmConfig::desk()
    };
    let started = std::time::Instant::now();
    let (params, log) = train(&config, &encoded, vocab.len())?;
    for e in &log.epochs {
        println!(
            "epoch {}: train ppl {:.3}  valid ppl {:.3}  lr {}  {:.1}s",
            e.epoch,
            e.train_loss.exp(),
            e.valid_loss.exp(),
            e.learning_rate,
            e.wall_seconds
        );
    }
    let ppl = evaluate_perplexity(&params, &encoded.valid)?;
    let unigram = unigram_perplexity(&encoded.train, &encoded.valid, vocab.len())?;
    println!("valid perplexity {ppl:.3} (unigram baseline {unigram:.3}) in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
