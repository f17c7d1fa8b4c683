//! Weighted sums `Σ_k β_k f(Z_k)` of a mixing chain obey an explicit
//! `p`-norm bound built from `√p`, the coefficient ℓ²-mass, and the total
//! variation of the coefficient sequence. This example measures the left
//! side by replication and compares.
//!
//! Also: empirical `p`-norms of a seeded standard-normal sample against the
//! sub-Gaussian bound `2^{1/p}·√p·σ`.
//!
//! ```text
//! cargo run --example rosenthal_check
//! ```

use obmlab::lab::{check_rosenthal, standard_normal_moments, subgaussian_moment_bound};
use obmlab::markov::TransitionKernel;

fn main() {
    let kernel = TransitionKernel::two_state(0.3, 0.1).unwrap();
    let n = 400usize;

    // Three coefficient shapes: flat, linear ramp, and a sparse comb.
    let flat = vec![1.0; n];
    let ramp: Vec<f64> = (1..=n).map(|k| k as f64 / n as f64).collect();
    let comb: Vec<f64> = (0..n).map(|k| if k % 7 == 0 { 1.0 } else { 0.0 }).collect();

    println!("weighted-sum p-norms vs bound, chain {} (R = 4000):\n", kernel.label());
    println!(
        "{:<6} {:>3} {:>12} {:>12} {:>8}",
        "betas", "p", "lhs", "rhs", "ratio"
    );
    for (label, betas) in [("flat", &flat), ("ramp", &ramp), ("comb", &comb)] {
        for p in [2u32, 4, 8] {
            let check =
                check_rosenthal(&kernel, &[1.0, 0.0], betas, p, 4_000, 90_210).unwrap();
            assert!(check.pass, "{label} p={p}: lhs {} > rhs {}", check.lhs, check.rhs);
            println!(
                "{:<6} {:>3} {:>12.4} {:>12.4} {:>8.4}",
                label, p, check.lhs, check.rhs, check.ratio
            );
        }
    }

    println!("\nstandard-normal p-norms vs 2^(1/p)·√p (200k seeded draws):\n");
    println!("{:>3} {:>12} {:>12} {:>8}", "p", "empirical", "bound", "ratio");
    for row in standard_normal_moments(200_000, 5_150, &[1, 2, 3, 4, 6, 8, 10]) {
        assert!(row.empirical <= row.bound);
        assert!((row.bound - subgaussian_moment_bound(row.p, 1.0)).abs() < 1e-15);
        println!(
            "{:>3} {:>12.6} {:>12.6} {:>8.4}",
            row.p,
            row.empirical,
            row.bound,
            row.empirical / row.bound
        );
    }
    println!("\nboth inequalities hold with room to spare on every row.");
}
