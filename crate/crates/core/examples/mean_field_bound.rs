//! Mean-field relaxation of a random Ising system and the gap between
//! the mean-field energy and the exact free energy.
//!
//! cargo run --example mean_field_bound -- [seed]

use hopnet::mean_field::{fixed_point_iterate, verify_bound, Activation, FixedPointConfig};
use hopnet::spin::{ConnectionMatrix, FieldVector, InverseTemperature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 10;
    let t = ConnectionMatrix::random(n, 1.0, &mut rng);
    let h = FieldVector::random(n, 0.5, &mut rng);
    let cfg = FixedPointConfig::default();

    println!("{:>6} {:>7} {:>12} {:>12} {:>10}", "beta", "sweeps", "F", "E_MFT", "gap");
    for beta in [0.2, 0.5, 1.0, 2.0, 4.0] {
        let beta = InverseTemperature::new(beta)?;
        let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let fp = fixed_point_iterate(&t, &h, beta, &Activation::bipolar(start)?, &cfg)?;
        let check = verify_bound(&t, &h, beta, &fp.activation)?;
        println!(
            "{:>6.2} {:>7} {:>12.6} {:>12.6} {:>10.2e}{}",
            beta.value(),
            fp.sweeps,
            check.f_exact,
            check.e_mft,
            check.gap,
            if fp.converged { "" } else { "  (not converged)" }
        );
    }
    Ok(())
}
