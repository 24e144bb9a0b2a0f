//! Unrolls K Euler steps of an analog network into a weight-shared layered
//! network, checks it against direct integration, then trains the shared
//! connections so the final state hits a target.
//!
//! cargo run --release --example unrolled_dynamics -- [seed]

use hopnet::activation::ActivationFunction;
use hopnet::dynamics::{euler_step, IntegratorConfig, NeuronState};
use hopnet::feedforward::{
    predict, train, unroll, unroll_input, BatchMode, TrainingBatch, TrainingConfig,
};
use hopnet::spin::{ConnectionMatrix, FieldVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, k) = (4, 3);
    let t = ConnectionMatrix::random(n, 0.5, &mut rng);
    let h = FieldVector::random(n, 0.2, &mut rng);
    let g = ActivationFunction::tanh(1.0);
    let cfg = IntegratorConfig::uniform(n, 0.5, 1.0, 1);

    let net = unroll(&t, &h, &g, &cfg, k)?;
    println!("{k} steps -> {} layers, {} distinct parameters", net.depth(), net.num_params());

    let s0 = NeuronState::from_potentials((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), &g);
    let mut s = s0.clone();
    for _ in 0..k {
        s = euler_step(&s, &t, &h, &g, &cfg)?;
    }
    let out = predict(&net, &unroll_input(&s0, &cfg))?;
    let err = (0..n).map(|i| (out[i] - s.v()[i]).abs()).fold(0.0, f64::max);
    println!("max difference from direct integration: {err:.2e}");

    let mut target = vec![0.0; net.output_width()];
    target[..n].copy_from_slice(&[0.5, -0.5, 0.5, -0.5]);
    target[n..].copy_from_slice(&out[n..]);
    let batch = TrainingBatch::new(vec![unroll_input(&s0, &cfg)], vec![target])?;
    let run = train(
        &net,
        &batch,
        &TrainingConfig {
            eta: 0.01,
            lambda: 0.0,
            batch_mode: BatchMode::FullBatch,
            epochs: 2000,
            seed,
        },
    )?;
    println!(
        "loss {:.6} -> {:.6}",
        run.losses[0],
        run.losses.last().unwrap()
    );
    Ok(())
}
