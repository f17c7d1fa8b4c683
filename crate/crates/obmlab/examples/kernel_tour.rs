//! Tour of the kernel toolbox: construction, stationary laws, and uniform
//! mixing certificates.
//!
//! ```text
//! cargo run --example kernel_tour
//! ```

use obmlab::markov::{certify_mixing, stationary, TransitionKernel};
use obmlab::tol;

fn main() {
    let kernels = vec![
        TransitionKernel::two_state(0.3, 0.1).unwrap(),
        TransitionKernel::two_state(0.25, 0.25).unwrap(),
        TransitionKernel::lazy_cycle(5).unwrap(),
        TransitionKernel::dirichlet_random(6, 1.0, 42).unwrap(),
        TransitionKernel::iid(&[0.1, 0.2, 0.3, 0.4]).unwrap(),
        // Hand-rolled: a sticky three-state chain.
        TransitionKernel::new(
            "sticky3",
            vec![
                vec![0.90, 0.05, 0.05],
                vec![0.10, 0.80, 0.10],
                vec![0.02, 0.08, 0.90],
            ],
        )
        .unwrap(),
    ];

    for kernel in &kernels {
        let pi = stationary(kernel).unwrap();
        let cert = certify_mixing(kernel, None).unwrap();

        // πP = π, to solver precision.
        let mut residual = 0.0f64;
        for j in 0..kernel.n_states() {
            let flow: f64 = (0..kernel.n_states())
                .map(|i| pi.probs()[i] * kernel.row(i)[j])
                .sum();
            residual = residual.max((flow - pi.probs()[j]).abs());
        }
        assert!(residual <= tol::STATIONARY_RESIDUAL, "πP ≠ π for {}", kernel.label());

        println!("kernel {:<28} states {} t_mix {:>2}", kernel.label(), kernel.n_states(), cert.t_mix);
        println!("  π = {:?}", rounded(pi.probs()));
        println!("  max |πP − π|   = {residual:.2e}");
        println!(
            "  worst-pair TV by step = {:?}",
            rounded(&cert.contraction_profile)
        );
        // After t_mix steps the tail factor halves every t_mix more steps.
        println!(
            "  tail factor at k = 2·t_mix: {:.4} (≤ 1/4² = 0.0625? {})",
            cert.tail_factor(2 * cert.t_mix),
            cert.tail_factor(2 * cert.t_mix) <= 0.0625
        );
        println!();
    }
}

fn rounded(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
