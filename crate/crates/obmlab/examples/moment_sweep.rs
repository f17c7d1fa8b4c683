//! Replicated moment experiment: how fast does the OBM error
//! `‖σ̂² − σ²_∞‖_p` shrink as the path grows? Under the √n batch rule the
//! predicted log–log slope against n is −1/4.
//!
//! ```text
//! cargo run --example moment_sweep
//! ```

use obmlab::lab::{fit_rate, run_moment_experiment, ExperimentSpec, RateAxis};
use obmlab::markov::TransitionKernel;

fn main() {
    let kernel = TransitionKernel::two_state(0.25, 0.25).unwrap();
    let mut spec = ExperimentSpec::standard(kernel, vec![1.0, -1.0]);
    spec.f_label = "spin".into();
    spec.replications = 300;
    spec.base_seed = 7_777;

    let report = run_moment_experiment(&spec).unwrap();
    println!(
        "chain {}  f = {}  σ²_∞ = {}  t_mix = {}  R = {}\n",
        report.kernel_label, report.f_label, report.sigma2_inf, report.t_mix, report.replications
    );
    println!(
        "{:>7} {:>5} {:>3} {:>12} {:>24} {:>12}",
        "n", "b_n", "p", "moment", "bootstrap 90% CI", "theory"
    );
    for row in &report.rows {
        println!(
            "{:>7} {:>5} {:>3} {:>12.6} [{:>10.6}, {:>10.6}] {:>12.4}",
            row.n, row.b_n, row.p, row.moment, row.moment_se_lo, row.moment_se_hi, row.theory_rate
        );
    }

    let fits = fit_rate(&report, RateAxis::N).unwrap();
    println!("\nlog–log slopes along n (jackknife ±2·SE):");
    for fit in &fits {
        println!(
            "  {:<10} slope {:+.4}  CI [{:+.4}, {:+.4}]  ({} points)",
            fit.axis, fit.slope, fit.ci_lo, fit.ci_hi, fit.points
        );
        assert!(
            fit.slope > -0.35 && fit.slope < -0.15,
            "√n-rule slope should sit near −1/4"
        );
    }
    println!("\npredicted slope under the √n rule: −1/4.");
}
