//! Acceptance battery: every release criterion as its own test, at full
//! depth. Each test prints a single `acceptance <k> <name>: PASS|FAIL (…)`
//! line (run with `--nocapture` to see them on success) and fails the build
//! if its criterion fails.
//!
//! The criteria are deterministic: fixed master seeds, fixed grids, and
//! fixed-order reductions make every run print the same numbers.

use obmlab::suite::{
    criterion_decomposition, criterion_determinism, criterion_normal_moments,
    criterion_obm_equivalence, criterion_rate_sweep, criterion_representation,
    criterion_rosenthal, criterion_variance_oracles, criterion_weight_algebra,
    CriterionReport, SuiteDepth,
};

fn check(report: CriterionReport) {
    println!("{}", report.line());
    assert!(report.pass, "{}", report.line());
}

#[test]
fn acceptance_1_pathwise_decomposition_identity() {
    check(criterion_decomposition(SuiteDepth::Full));
}

#[test]
fn acceptance_2_remainder_representation_identity() {
    check(criterion_representation(SuiteDepth::Full));
}

#[test]
fn acceptance_3_obm_equivalence() {
    check(criterion_obm_equivalence(SuiteDepth::Full));
}

#[test]
fn acceptance_4_weight_band_algebra() {
    check(criterion_weight_algebra(SuiteDepth::Full));
}

#[test]
fn acceptance_5_variance_oracles_agree() {
    check(criterion_variance_oracles(SuiteDepth::Full));
}

#[test]
fn acceptance_6_error_rate_sweep_slope() {
    check(criterion_rate_sweep(SuiteDepth::Full));
}

#[test]
fn acceptance_7_weighted_sum_inequality() {
    check(criterion_rosenthal(SuiteDepth::Full));
}

#[test]
fn acceptance_8_normal_moment_bound() {
    check(criterion_normal_moments(SuiteDepth::Full));
}

#[test]
fn acceptance_9_deterministic_reports() {
    check(criterion_determinism(SuiteDepth::Full));
}
