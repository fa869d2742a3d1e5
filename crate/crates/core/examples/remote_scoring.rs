//! Score paradigms through the `/v1/score` protocol against the built-in
//! mock server, which splits long words into two subword pieces.
//! Pass an endpoint to score against a real service instead.
//!
//!     cargo run --example remote_scoring -- [endpoint]

use std::sync::Arc;

use gaplab::lm_client::{score_paradigms, ClientOptions, MockOptions, MockScorer, WordModel};
use gaplab::stimgen::{bind_lexicon, builtin_lexicon, builtin_template};
use gaplab::Construction;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c = Construction::Clefting;
    let items = bind_lexicon(builtin_template(c), builtin_lexicon(c), 6, 11)?;

    // longer and later words are less likely under the mock
    let model: Arc<WordModel> = Arc::new(|words: &[String]| {
        words.iter().enumerate().map(|(k, w)| -0.4 * w.len() as f64 - 0.1 * k as f64).collect()
    });
    let mock = MockScorer::start(model, MockOptions::default())?;
    let endpoint = std::env::args().nth(1).unwrap_or_else(|| mock.url.clone());

    let opts = ClientOptions { batch_size: 8, ..ClientOptions::default() };
    let (model_id, scores) = score_paradigms(&endpoint, &items, &opts)?;
    println!("model {model_id}, {} region scores over {} requests", scores.len(), mock.requests());
    for s in scores.iter().take(8) {
        println!("  item {} {}  {:.3} bits", s.item_id, s.condition(), s.region_surprisal_bits);
    }
    Ok(())
}
