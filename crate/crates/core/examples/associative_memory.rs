//! Stores random patterns with slow Hebbian learning, then recovers them
//! from corrupted probes.
//!
//! cargo run --release --example associative_memory -- [patterns] [seed]

use hopnet::hebbian::{corrupt, learn, recall, HebbConfig, PatternSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let n = 100;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patterns = PatternSet::random(count, n, &mut rng)?;
    let memory = learn(&patterns, &HebbConfig::learning(1.0, 1.0)?, 0.01, 1000)?;

    for flips in [0, 5, 10, 20, 30] {
        let mut correct = 0;
        for target in patterns.patterns() {
            let probe = corrupt(target, flips, &mut rng)?;
            let res = recall(&memory, &probe, 0.0, 100)?;
            correct += res.state.overlap_count(target);
        }
        println!(
            "{flips:>2} flipped bits: {:.3} of bits recovered",
            correct as f64 / (count * n) as f64
        );
    }
    Ok(())
}
