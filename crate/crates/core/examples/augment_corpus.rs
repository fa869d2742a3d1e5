//! Synthesize a base corpus, generate augmentation sentences from the
//! disjoint lexicon and splice them into the training split.
//!
//!     cargo run --example augment_corpus -- [construction] [n] [tokens]

use gaplab::corpus::{augment_corpus, builtin_grammar, synth_corpus, Sentence};
use gaplab::stimgen::{builtin_augmentation_lexicon, builtin_lexicon, builtin_template, generate_training_sentences};
use gaplab::Construction;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let c: Construction = args.next().as_deref().unwrap_or("clefting").parse()?;
    let n: usize = args.next().map_or(Ok(864), |a| a.parse())?;
    let tokens: usize = args.next().map_or(Ok(100_000), |a| a.parse())?;

    let base = synth_corpus(&builtin_grammar(), tokens, 7)?;
    let lexicon = builtin_augmentation_lexicon(c).ok_or_else(|| format!("no augmentation lexicon for {}", c.name()))?;
    let added = generate_training_sentences(builtin_template(c), n, lexicon, builtin_lexicon(c), 3)?;
    for s in added.iter().take(4) {
        println!("{} {}", if s.gap { "+gap" } else { "-gap" }, s.tokens.join(" "));
    }
    let sentences: Vec<Sentence> = added.iter().map(|s| s.tokens.clone()).collect();
    let aug = augment_corpus(&base, &sentences, 4);
    println!(
        "base train {} sentences, augmented {} (+{}, {} with a gap); valid {} and test {} unchanged",
        base.train.len(),
        aug.train.len(),
        aug.train.len() - base.train.len(),
        added.iter().filter(|s| s.gap).count(),
        aug.valid.len(),
        aug.test.len()
    );
    Ok(())
}
