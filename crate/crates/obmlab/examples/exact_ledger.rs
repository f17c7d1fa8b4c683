//! Replay the decomposition ledger in exact rational arithmetic. With
//! `f := g − Pg` taken as dyadic rationals, every identity residual is the
//! literal zero `0/1`, and the truncated reading's gap is an exact fraction.
//!
//! ```text
//! cargo run --example exact_ledger
//! ```

use num_traits::Zero;
use obmlab::exact::{decompose_exact, rationalize};
use obmlab::markov::{sample_path, stationary, TransitionKernel};
use obmlab::poisson::{solve_poisson, CenteredFunction};
use obmlab::weights::{BatchGeometry, ObmWeights};

fn main() {
    let kernel = TransitionKernel::two_state(0.3, 0.1).unwrap();
    let pi = stationary(&kernel).unwrap();
    let f = CenteredFunction::center(&[1.0, 0.0], &pi);
    let sol = solve_poisson(&kernel, &pi, &f).unwrap();

    let (n, b) = (28usize, 6usize);
    let geom = BatchGeometry::new(n, b).unwrap();
    let weights = ObmWeights::new(geom);
    let path = sample_path(&kernel, pi.probs(), n, 8).unwrap();

    let exact = decompose_exact(&path, &weights, &rationalize(&sol.g), &rationalize(&sol.p_g))
        .unwrap();

    println!("chain {}  n = {n}  b = {b}  (exact rational replay)\n", kernel.label());
    for (name, value) in exact.rows() {
        // Large fractions are abbreviated; the residual rows are the point.
        let printed = if value.len() > 44 {
            format!("{}…/…{} ({} chars)", &value[..18], &value[value.len() - 8..], value.len())
        } else {
            value
        };
        println!("{name:<38} {printed}");
    }

    assert!(exact.identities_exact(), "all three identities close exactly");
    assert!(exact.residual_decomposition.is_zero());
    assert!(exact.residual_split.is_zero());
    assert!(exact.residual_representation.is_zero());
    println!("\nall identity residuals are exactly 0/1 — no tolerance involved.");

    // The truncated reading differs by an exact, nonzero fraction.
    assert!(!exact.residual_representation_truncated.is_zero());
    println!(
        "truncated-reading gap (exact): {} ≈ {:.6e}",
        exact.residual_representation_truncated,
        exact.to_f64("residual_representation_truncated").unwrap()
    );

    // The float ledger agrees with the exact one term by term.
    let f_float: Vec<f64> = sol.g.iter().zip(&sol.p_g).map(|(g, pg)| g - pg).collect();
    let led = obmlab::decompose(&path, &f_float, &weights, &sol).unwrap();
    let mut worst = 0.0f64;
    for (name, float_value) in [
        ("u_n", led.u_n),
        ("diag_term", led.diag_term),
        ("offdiag_term", led.offdiag_term),
        ("r_bar", led.r_bar),
        ("r_mart", led.r_mart),
        ("r_rem", led.r_rem),
    ] {
        let reference = exact.to_f64(name).unwrap();
        worst = worst.max((float_value - reference).abs() / (1.0 + reference.abs()));
    }
    println!("float ledger vs exact ledger, worst relative gap: {worst:.2e}");
    assert!(worst <= 1e-12);
}
