//! Euler integration of an analog network; the energy column never rises.
//!
//! cargo run --example analog_relaxation -- [seed]

use hopnet::activation::ActivationFunction;
use hopnet::dynamics::{integrate, IntegratorConfig, NeuronState};
use hopnet::spin::{ConnectionMatrix, FieldVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 6;
    let t = ConnectionMatrix::random(n, 1.0, &mut rng);
    let h = FieldVector::random(n, 0.3, &mut rng);
    let g = ActivationFunction::tanh(3.0);
    let u0: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect();

    let mut cfg = IntegratorConfig::uniform(n, 0.01, 1.0, 2000);
    cfg.record_every = 200;
    let traj = integrate(&NeuronState::from_potentials(u0, &g), &t, &h, &g, &cfg)?;

    for ((time, state), e) in traj.times.iter().zip(&traj.states).zip(&traj.energies) {
        let v: Vec<String> = state.v().iter().map(|x| format!("{x:+.3}")).collect();
        println!("t={time:>5.1}  E={e:+.6}  v=[{}]", v.join(" "));
    }
    Ok(())
}
