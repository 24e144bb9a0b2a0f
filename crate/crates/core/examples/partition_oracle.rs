//! Exact thermodynamics of a small random Ising system by enumeration.
//!
//! cargo run --example partition_oracle -- [n] [seed]

use hopnet::spin::{brute_force_partition, ConnectionMatrix, FieldVector, InverseTemperature};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = ConnectionMatrix::random(n, 1.0, &mut rng);
    let h = FieldVector::random(n, 0.5, &mut rng);

    println!("{:>6} {:>12} {:>12} {:>12} {:>10}", "beta", "F", "<E>", "S", "<s_0>");
    for beta in [0.1, 0.5, 1.0, 2.0, 5.0] {
        let r = brute_force_partition(&t, &h, InverseTemperature::new(beta)?)?;
        println!(
            "{beta:>6.2} {:>12.6} {:>12.6} {:>12.6} {:>10.4}",
            r.f, r.mean_energy, r.entropy, r.mean_spins[0]
        );
    }
    Ok(())
}
