//! Solve `g − Pg = f` and reach the asymptotic variance `σ²_∞(f)` by three
//! independent routes — they must agree to solver precision.
//!
//! Routes:
//! 1. stationary mean of the conditional variance `ĝ = Pg² − (Pg)²`,
//! 2. autocovariance series `Var_π(f) + 2 Σ_k Cov(f(Z_0), f(Z_k))`,
//! 3. the pairing `π(2 f g − f²)`  (equivalently `π(g² − (Pg)²)`).
//!
//! ```text
//! cargo run --example poisson_triple_check
//! ```

use obmlab::markov::{certify_mixing, stationary, TransitionKernel};
use obmlab::poisson::{
    g_sup_bound, sigma2_by_autocovariance, sigma2_by_pairing, solve_poisson, CenteredFunction,
};
use obmlab::tol;

fn main() {
    let cells: Vec<(TransitionKernel, Vec<f64>, &str)> = vec![
        (
            TransitionKernel::two_state(0.3, 0.1).unwrap(),
            vec![1.0, 0.0],
            "indicator of state 0",
        ),
        (
            TransitionKernel::two_state(0.25, 0.25).unwrap(),
            vec![1.0, -1.0],
            "±1 spin",
        ),
        (
            TransitionKernel::lazy_cycle(5).unwrap(),
            vec![1.0, 0.0, 0.0, 0.0, 0.0],
            "indicator of site 0",
        ),
        (
            TransitionKernel::dirichlet_random(7, 0.9, 2024).unwrap(),
            (0..7).map(|k| (k as f64).sin()).collect(),
            "sin ramp",
        ),
        (
            TransitionKernel::iid(&[0.2, 0.5, 0.3]).unwrap(),
            vec![2.0, -1.0, 0.5],
            "iid case (σ²_∞ = Var_π(f))",
        ),
    ];

    println!(
        "{:<28} {:<28} {:>12} {:>12} {:>12} {:>10}",
        "kernel", "f", "martingale", "autocov", "pairing", "spread"
    );
    for (kernel, f_raw, f_label) in cells {
        let pi = stationary(&kernel).unwrap();
        let f = CenteredFunction::center(&f_raw, &pi);
        let sol = solve_poisson(&kernel, &pi, &f).unwrap();
        let by_acov = sigma2_by_autocovariance(&kernel, &pi, &f, tol::ACOV_TAIL).unwrap();
        let by_pairing = sigma2_by_pairing(&pi, &f, &sol);

        let spread = (by_acov - sol.sigma2_inf)
            .abs()
            .max((by_pairing - sol.sigma2_inf).abs());
        assert!(
            spread <= tol::SIGMA2_AGREEMENT * (1.0 + sol.sigma2_inf.abs()),
            "routes disagree for {}",
            kernel.label()
        );

        // The Poisson residual itself, max_z |g(z) − (Pg)(z) − f(z)|.
        let pg = kernel.apply(&sol.g);
        let resid = sol
            .g
            .iter()
            .zip(&pg)
            .zip(f.values())
            .map(|((g, pg), f)| (g - pg - f).abs())
            .fold(0.0f64, f64::max);
        assert!(resid <= tol::POISSON_RESIDUAL);

        // ‖g‖∞ against the mixing-time bound (8/3)·t_mix·‖f‖∞.
        let cert = certify_mixing(&kernel, None).unwrap();
        let g_sup = sol.g.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        let bound = g_sup_bound(cert.t_mix, f.sup_norm());
        assert!(g_sup <= bound, "‖g‖∞ = {g_sup} exceeds {bound}");

        println!(
            "{:<28} {:<28} {:>12.8} {:>12.8} {:>12.8} {:>10.1e}",
            kernel.label(),
            f_label,
            sol.sigma2_inf,
            by_acov,
            by_pairing,
            spread
        );
        println!(
            "{:<57} Poisson residual {:.1e}; ‖g‖∞ = {:.3} ≤ (8/3)·t_mix·‖f‖∞ = {:.3}",
            "", resid, g_sup, bound
        );
    }

    // Closed form for any two-state chain: σ²_∞ = Var_π(f)·(1+λ)/(1−λ),
    // with λ = 1 − a − b the second eigenvalue.
    let (a, b) = (0.3, 0.1);
    let kernel = TransitionKernel::two_state(a, b).unwrap();
    let pi = stationary(&kernel).unwrap();
    let f = CenteredFunction::center(&[1.0, 0.0], &pi);
    let sol = solve_poisson(&kernel, &pi, &f).unwrap();
    let lambda = 1.0 - a - b;
    let closed = pi.variance(&[1.0, 0.0]) * (1.0 + lambda) / (1.0 - lambda);
    println!(
        "\ntwo_state closed form: σ²_∞ = Var_π(f)(1+λ)/(1−λ) = {closed:.12}  (solver: {:.12})",
        sol.sigma2_inf
    );
    assert!((closed - sol.sigma2_inf).abs() <= 1e-12);
}
