//! Compare backpropagated LSTM gradients with finite differences.
//!
//!     cargo run --release --example gradient_check -- [hidden<=8] [layers] [steps]

use gaplab::corpus::Batch;
use gaplab::neural_lm::{gradient_check, LmConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let hidden: usize = args.next().map_or(Ok(8), |a| a.parse())?;
    let layers: usize = args.next().map_or(Ok(2), |a| a.parse())?;
    let steps: usize = args.next().map_or(Ok(5), |a| a.parse())?;

    let config = LmConfig {
        embed_dim: hidden,
        hidden_dim: hidden,
        num_layers: layers,
        dropout_prob: 0.0,
        ..LmConfig::desk()
    };
    let (batch_size, vocab) = (3, 12u32);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = steps * batch_size;
    let sample = Batch {
        seq_len: steps,
        batch_size,
        inputs: (0..n).map(|_| rng.gen_range(0..vocab)).collect(),
        targets: (0..n).map(|_| rng.gen_range(0..vocab)).collect(),
    };
    let report = gradient_check(&config, &sample, vocab as usize)?;
    println!(
        "{} parameters checked, max relative error {:.3e} at {}[{}]",
        report.checked, report.max_rel_error, report.worst.0, report.worst.1
    );
    Ok(())
}
