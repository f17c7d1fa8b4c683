//! Sample one path and print the complete pathwise decomposition of the OBM
//! quadratic form: diagonal + off-diagonal martingale transforms, the three
//! remainder readings, and every identity residual.
//!
//! ```text
//! cargo run --example decomposition_ledger
//! ```

use obmlab::decomp::{decompose, theorem_terms};
use obmlab::markov::{sample_path, stationary, TransitionKernel};
use obmlab::poisson::{solve_poisson, CenteredFunction};
use obmlab::weights::{BatchGeometry, ObmWeights};

fn main() {
    let kernel = TransitionKernel::lazy_cycle(5).unwrap();
    let pi = stationary(&kernel).unwrap();
    let f = CenteredFunction::center(&[1.0, 0.0, 0.0, 0.0, 0.0], &pi);
    let sol = solve_poisson(&kernel, &pi, &f).unwrap();

    let (n, b) = (2_000usize, 45usize);
    let geom = BatchGeometry::new(n, b).unwrap();
    let weights = ObmWeights::new(geom);
    let path = sample_path(&kernel, pi.probs(), n, 314_159).unwrap();

    let led = decompose(&path, f.values(), &weights, &sol).unwrap();

    println!("chain {}  n = {n}  b = {b}  σ²_∞ = {:.6}\n", kernel.label(), sol.sigma2_inf);
    let rows = [
        ("U_n (quadratic form)", led.u_n),
        ("  diagonal term", led.diag_term),
        ("  off-diagonal term", led.offdiag_term),
        ("  remainder  R̄", led.r_bar),
        ("R̄ split:  T1", led.t1),
        ("          T2", led.t2),
        ("          T3", led.t3),
        ("re-summed: rep1", led.rep1),
        ("           rep2", led.rep2),
        ("           rep3", led.rep3),
        ("           rep3 (truncated)", led.rep3_truncated),
        ("           S1", led.s1),
        ("           S2", led.s2),
        ("martingale remainder  R_mart", led.r_mart),
        ("boundary remainder    R_rem", led.r_rem),
        ("  rem1", led.rem1),
        ("  rem2", led.rem2),
        ("  rem3", led.rem3),
        ("  rem4", led.rem4),
        ("  rem5", led.rem5),
    ];
    for (name, value) in rows {
        println!("{name:<30} {value:>18.12}");
    }

    println!("\nidentity residuals (each from an independent accumulation):");
    println!("  decomposition  U_n − diag − offdiag − R̄      = {:+.3e}", led.residual_decomposition);
    println!("  split          (T1+T2+T3) − R̄                = {:+.3e}", led.residual_split);
    println!("  representation (rep1+rep2−rep3+S1+S2) − R̄    = {:+.3e}", led.residual_representation);
    println!("  truncated      (…rep3 stopped before ℓ=n…)    = {:+.3e}", led.residual_representation_truncated);
    let scale = 1.0 + led.u_n.abs();
    assert!(led.residual_decomposition.abs() <= 1e-9 * scale);
    assert!(led.residual_split.abs() <= 1e-9 * scale);
    assert!(led.residual_representation.abs() <= 1e-9 * scale);
    assert!(
        led.residual_representation_truncated.abs() > 1e-9 * scale,
        "for b ≥ 2 the truncated reading genuinely differs"
    );

    let terms = theorem_terms(&led, sol.sigma2_inf).unwrap();
    println!("\nerror split against σ²_∞ (U_n − σ² = D1 + D2 + R̄):");
    println!("  D1  = diag − σ²          = {:+.6}", terms.d1);
    println!("    D1,1 = Σ w(ℓ,ℓ)(M_ℓ² − ĝ)  = {:+.6}", terms.d11);
    println!("    D1,2 = Σ w(ℓ,ℓ)(ĝ − σ²)    = {:+.6}", terms.d12);
    println!("  D2  = off-diagonal       = {:+.6}", terms.d2);
    println!("  R̄                        = {:+.6}", led.r_bar);
    println!("  total                    = {:+.6}  (U_n − σ² = {:+.6})",
        terms.d1 + terms.d2 + led.r_bar, led.u_n - sol.sigma2_inf);
}
