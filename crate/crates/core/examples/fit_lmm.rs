//! Fit the sum-coded random-intercept regressions on a simulated table of
//! region surprisals with a known licensing interaction and island penalty.
//!
//!     cargo run --example fit_lmm -- [items] [seed]

use gaplab::scoring::RegionScore;
use gaplab::stats::{basic_licensing_test, directional_island_tests, island_three_way_test};
use gaplab::{Condition, Construction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let items: u32 = args.next().map_or(Ok(48), |a| a.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |a| a.parse())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (item_sd, noise) = (Normal::new(0.0, 1.0)?, Normal::new(0.0, 0.8)?);
    let c = Construction::WhMovement;
    let mut scores = Vec::new();
    for item in 1..=items {
        let offset = item_sd.sample(&mut rng);
        for cond in Condition::all() {
            let (f, g, i) = (cond.filler.code(), cond.gap.code(), cond.island.code());
            let bits = 8.0 + offset - 3.0 * f * g + 2.5 * f * g * i + noise.sample(&mut rng);
            scores.push(RegionScore {
                construction: c,
                item_id: item,
                filler: cond.filler,
                gap: cond.gap,
                island: cond.island,
                region_surprisal_bits: bits,
            });
        }
    }
    let (fit, verdict) = basic_licensing_test(&scores, c, 0.001)?;
    println!("licensing (sigma_item^2 {:.3}, sigma^2 {:.3}):", fit.sigma2_item, fit.sigma2_resid);
    for t in &fit.terms {
        println!("  {:<16} {:>8.3}  se {:.3}  p {:.2e}", t.term, t.estimate, t.se, t.p);
    }
    println!("  {}", verdict.detail);
    let (_, verdict) = island_three_way_test(&scores, c, 0.001)?;
    println!("three-way: {}", verdict.detail);
    for (fit, verdict) in directional_island_tests(&scores, c, 0.001)? {
        let fi = fit.term("filler:island").map_or(f64::NAN, |t| t.estimate);
        println!("{}: filler:island {fi:.3}, {}", verdict.analysis.name(), verdict.detail);
    }
    Ok(())
}
