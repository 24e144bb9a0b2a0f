//! Deterministic annealing with doubly stochastic soft-assignment on a
//! random travelling salesman instance, compared with the exact optimum.
//!
//! cargo run --release --example softassign_tsp -- [cities] [seed]

use hopnet::tsp::{brute_force_tour, solve_tsp, TspInstance, TspOptions, MAX_CITIES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(8);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);

    let inst = TspInstance::random(n, &mut ChaCha8Rng::seed_from_u64(seed));
    let sol = solve_tsp(&inst, &TspOptions::default())?;

    for rec in sol.stages.iter().step_by(25) {
        println!(
            "stage {:>3}  beta {:>8.2}  entropy {:>7.3}  residual {:.1e}",
            rec.stage, rec.beta, rec.entropy, rec.constraint_residual
        );
    }
    println!("tour {:?}  length {:.4}", sol.tour, sol.tour_length);
    if sol.fallback_used {
        println!("(assignment was not a permutation; greedy decoding used)");
    }
    if n <= MAX_CITIES {
        let (best, len) = brute_force_tour(&inst)?;
        println!("optimum {best:?}  length {len:.4}  ratio {:.4}", sol.tour_length / len);
    }
    Ok(())
}
