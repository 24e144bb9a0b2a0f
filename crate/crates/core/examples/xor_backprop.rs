//! Trains a 2-2-1 tanh network on XOR with full-batch gradient descent.
//!
//! cargo run --release --example xor_backprop -- [seed]

use hopnet::feedforward::{
    predict, train, BatchMode, LayerActivation, LayeredNetwork, TrainingBatch, TrainingConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let tanh = LayerActivation::Tanh { gain: 1.0 };
    let net = LayeredNetwork::random(&[2, 2, 1], tanh, tanh, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let batch = TrainingBatch::xor();
    let cfg = TrainingConfig {
        eta: 0.1,
        lambda: 0.0,
        batch_mode: BatchMode::FullBatch,
        epochs: 5000,
        seed,
    };

    let run = train(&net, &batch, &cfg)?;
    for (epoch, l) in run.losses.iter().enumerate().step_by(1000) {
        println!("epoch {epoch:>5}  loss {l:.6}");
    }
    println!("final loss {:.6}", run.losses.last().unwrap());
    for (x, y) in batch.inputs().iter().zip(batch.targets()) {
        println!("{x:?} -> {:+.4} (target {:+})", predict(&run.network, x)?[0], y[0]);
    }
    Ok(())
}
