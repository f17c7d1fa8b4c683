//! The OBM estimator two ways: the sliding-window definition, and the
//! banded quadratic form plus rank-one corrections. Same number, two very
//! different computations.
//!
//! ```text
//! cargo run --example obm_equivalence
//! ```

use obmlab::estimator::{obm_direct, obm_quadratic};
use obmlab::markov::{sample_path, stationary, TransitionKernel};
use obmlab::poisson::{solve_poisson, CenteredFunction};
use obmlab::weights::BatchGeometry;

fn main() {
    let kernel = TransitionKernel::two_state(0.25, 0.25).unwrap();
    let pi = stationary(&kernel).unwrap();
    let f_raw = [1.0, -1.0];
    let f = CenteredFunction::center(&f_raw, &pi);
    let sol = solve_poisson(&kernel, &pi, &f).unwrap();

    let n = 8_192usize;
    let path = sample_path(&kernel, pi.probs(), n, 1_000_003).unwrap();
    let x = path.f_samples(&f_raw);

    println!("chain {}  n = {n}  σ²_∞ = {}\n", kernel.label(), sol.sigma2_inf);
    println!(
        "{:>6} {:>14} {:>14} {:>10} {:>12} {:>12} {:>10}",
        "b", "direct", "quadratic", "gap", "quad part", "u part", "v part"
    );
    for b in [1usize, 2, 8, 23, 64, 91, 256, 1024, 4096, 8192] {
        let geom = BatchGeometry::new(n, b).unwrap();
        let d = obm_direct(&x, geom).unwrap();
        let q = obm_quadratic(&x, geom).unwrap();
        let gap = (d.value - q.value).abs() / (1.0 + d.value.abs());
        assert!(gap <= 1e-10, "b={b}: gap {gap:e}");
        // The parts agree too, not just their sum.
        assert!((d.quad_part - q.quad_part).abs() <= 1e-9 * (1.0 + d.quad_part.abs()));
        println!(
            "{:>6} {:>14.8} {:>14.8} {:>10.1e} {:>12.6} {:>12.6} {:>10.2e}",
            b, d.value, q.value, gap, q.quad_part, q.u_part, q.v_part
        );
    }
    println!(
        "\nσ̂² = (b/N₁)·XᵀBᵀBX  +  b(uᵀX)²  −  b(vᵀX)²   with  v_ℓ = w(ℓ,ℓ),  u = 1/n − v."
    );
    println!("small b truncates the autocovariance (downward bias); b near n leaves too few");
    println!("windows (variance, then degeneracy at b = n). The √n rule balances the two.");

    let sqrt_geom = BatchGeometry::sqrt_rule(n).unwrap();
    let est = obm_direct(&x, sqrt_geom).unwrap();
    println!(
        "b = ⌈√n⌉ = {}: σ̂² = {:.6}, signed error {:+.6}",
        sqrt_geom.b(),
        est.value,
        est.error_against_truth(sol.sigma2_inf)
    );
}
