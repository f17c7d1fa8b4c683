//! The OBM estimator, computed two ways.
//!
//! For samples `X_1, …, X_n` (values `f(Z_ℓ)` along a path — centering is
//! unnecessary, the estimator is shift invariant) with batch length `b` and
//! `N₁ = n − b + 1` windows, the estimator is
//!
//! ```text
//! σ̂² = b/N₁ · Σ_{t=0}^{n−b} ( Ȳ_t − π_n )² ,     Ȳ_t = (1/b) Σ_{i=t+1}^{t+b} X_i ,
//! ```
//!
//! with `π_n` the overall sample mean. Writing `B` for the `N₁ × n` batch
//! averaging matrix, the same number is a banded quadratic form plus two
//! rank-one corrections:
//!
//! ```text
//! σ̂² = b/N₁ · XᵀBᵀBX + b (uᵀX)² − b (vᵀX)² ,
//! v = Bᵀ1/N₁  (so v_ℓ = w(ℓ,ℓ)),   u = (1/n)·1 − v ,
//! ```
//!
//! where `b/N₁ · (BᵀB)` unfolded into its lower triangle is exactly the
//! weight band of [`crate::weights::ObmWeights`]. [`obm_direct`] computes the
//! sliding-window definition in `O(n)`; [`obm_quadratic`] computes the
//! quadratic-form version in `O(n·b)`. Both fill every component of
//! [`ObmEstimate`] from that component's own definition, so comparing the
//! two routes is a genuine end-to-end check of the band algebra.

use serde::Serialize;

use crate::summation::NeumaierSum;
use crate::weights::{BatchGeometry, ObmWeights};

/// Errors from estimator construction.
#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    /// Sample count does not match the geometry.
    #[error("sample count {got} does not match the geometry's n = {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// An OBM estimate with its quadratic-form components.
///
/// `value = quad_part + u_part − v_part` holds for both construction routes
/// up to round-off; each field is computed from its own definition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ObmEstimate {
    /// The estimate `σ̂²`.
    pub value: f64,
    /// `b/N₁ · XᵀBᵀBX` — the banded quadratic form on raw samples.
    pub quad_part: f64,
    /// `b (uᵀX)²`.
    pub u_part: f64,
    /// `b (vᵀX)²`.
    pub v_part: f64,
    /// The geometry used.
    pub geometry: BatchGeometry,
}

impl ObmEstimate {
    /// Signed estimation error against a reference value (e.g. `σ²_∞`).
    pub fn error_against_truth(&self, sigma2_inf: f64) -> f64 {
        self.value - sigma2_inf
    }
}

fn check_len(samples: &[f64], geom: BatchGeometry) -> Result<(), EstimatorError> {
    if samples.len() != geom.n() {
        return Err(EstimatorError::DimensionMismatch {
            expected: geom.n(),
            got: samples.len(),
        });
    }
    Ok(())
}

/// Sliding-window mean of all batch means, `vᵀX = (1/N₁) Σ_t Ȳ_t`.
fn batch_mean_stats(samples: &[f64], b: usize) -> (Vec<f64>, f64) {
    let n1 = samples.len() - b + 1;
    let mut window = NeumaierSum::new();
    for &x in &samples[..b] {
        window.add(x);
    }
    let mut means = Vec::with_capacity(n1);
    means.push(window.value() / b as f64);
    for t in 1..n1 {
        window.add(samples[t + b - 1]);
        window.add(-samples[t - 1]);
        means.push(window.value() / b as f64);
    }
    let grand = NeumaierSum::total(means.iter().copied()) / n1 as f64;
    (means, grand)
}

/// Just the estimate value, `O(n)`, no allocation beyond the window: the
/// hot path for Monte Carlo replication.
pub(crate) fn obm_value_fast(samples: &[f64], b: usize) -> f64 {
    let n = samples.len();
    let n1 = n - b + 1;
    let pi_n = NeumaierSum::total(samples.iter().copied()) / n as f64;
    let mut window = NeumaierSum::new();
    for &x in &samples[..b] {
        window.add(x);
    }
    let mut dev2 = NeumaierSum::new();
    let d0 = window.value() / b as f64 - pi_n;
    dev2.add(d0 * d0);
    for t in 1..n1 {
        window.add(samples[t + b - 1]);
        window.add(-samples[t - 1]);
        let d = window.value() / b as f64 - pi_n;
        dev2.add(d * d);
    }
    b as f64 / n1 as f64 * dev2.value()
}

/// The estimator from its sliding-window definition, `O(n)`.
pub fn obm_direct(samples: &[f64], geom: BatchGeometry) -> Result<ObmEstimate, EstimatorError> {
    check_len(samples, geom)?;
    let (n, b) = (geom.n(), geom.b());
    let n1 = geom.windows();
    let pi_n = NeumaierSum::total(samples.iter().copied()) / n as f64;
    let (means, v_dot_x) = batch_mean_stats(samples, b);

    let mut dev2 = NeumaierSum::new();
    let mut sq = NeumaierSum::new();
    for &y in &means {
        let d = y - pi_n;
        dev2.add(d * d);
        sq.add(y * y);
    }
    let bf = b as f64;
    let u_dot_x = pi_n - v_dot_x;
    Ok(ObmEstimate {
        value: bf / n1 as f64 * dev2.value(),
        quad_part: bf / n1 as f64 * sq.value(),
        u_part: bf * u_dot_x * u_dot_x,
        v_part: bf * v_dot_x * v_dot_x,
        geometry: geom,
    })
}

/// The estimator through the weight band, `O(n·b)`.
pub fn obm_quadratic(samples: &[f64], geom: BatchGeometry) -> Result<ObmEstimate, EstimatorError> {
    check_len(samples, geom)?;
    let weights = ObmWeights::new(geom);
    let quad_part = crate::decomp::quadratic_form_samples(samples, &weights);

    let (u, v) = weights.uv_vectors();
    let mut u_dot = NeumaierSum::new();
    let mut v_dot = NeumaierSum::new();
    for (i, &x) in samples.iter().enumerate() {
        u_dot.add(u[i] * x);
        v_dot.add(v[i] * x);
    }
    let bf = geom.b() as f64;
    let u_part = bf * u_dot.value() * u_dot.value();
    let v_part = bf * v_dot.value() * v_dot.value();
    Ok(ObmEstimate {
        value: quad_part + u_part - v_part,
        quad_part,
        u_part,
        v_part,
        geometry: geom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tol;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn lcg_samples(n: usize, mut state: u64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn matches_a_plain_triple_loop_oracle() {
        // n = 8, b = 3: brute-force the definition with no prefix tricks.
        let x = lcg_samples(8, 7);
        let (n, b) = (8usize, 3usize);
        let n1 = n - b + 1;
        let pi: f64 = x.iter().sum::<f64>() / n as f64;
        let mut acc = 0.0;
        for t in 0..n1 {
            let mean: f64 = x[t..t + b].iter().sum::<f64>() / b as f64;
            acc += (mean - pi) * (mean - pi);
        }
        let oracle = b as f64 / n1 as f64 * acc;
        let geom = BatchGeometry::new(n, b).unwrap();
        assert_close(obm_direct(&x, geom).unwrap().value, oracle, 1e-13);
        assert_close(obm_quadratic(&x, geom).unwrap().value, oracle, 1e-13);
    }

    #[test]
    fn the_two_routes_agree_component_by_component() {
        for (n, b, seed) in [
            (5usize, 2usize, 1u64),
            (16, 4, 2),
            (37, 6, 3),
            (64, 1, 4),
            (64, 64, 5),
            (200, 14, 6),
            (333, 18, 7),
        ] {
            let x = lcg_samples(n, seed);
            let geom = BatchGeometry::new(n, b).unwrap();
            let d = obm_direct(&x, geom).unwrap();
            let q = obm_quadratic(&x, geom).unwrap();
            let tol_v = tol::OBM_EQUIVALENCE * (1.0 + d.value.abs());
            assert!(
                (d.value - q.value).abs() <= tol_v,
                "value mismatch at n={n} b={b}: {} vs {}",
                d.value,
                q.value
            );
            for (a, bb, name) in [
                (d.quad_part, q.quad_part, "quad"),
                (d.u_part, q.u_part, "u"),
                (d.v_part, q.v_part, "v"),
            ] {
                assert!(
                    (a - bb).abs() <= 1e-9 * (1.0 + a.abs()),
                    "{name} mismatch at n={n} b={b}: {a} vs {bb}"
                );
            }
            // Internal consistency of each estimate.
            assert_close(d.value, d.quad_part + d.u_part - d.v_part, 1e-10 * (1.0 + d.value.abs()));
            assert_close(q.value, q.quad_part + q.u_part - q.v_part, 1e-15 * (1.0 + q.value.abs()));
        }
    }

    #[test]
    fn fast_value_agrees_with_the_full_struct() {
        let x = lcg_samples(145, 99);
        let geom = BatchGeometry::new(145, 12).unwrap();
        assert_close(
            obm_value_fast(&x, 12),
            obm_direct(&x, geom).unwrap().value,
            1e-14,
        );
    }

    #[test]
    fn single_window_estimate_is_zero() {
        // b = n: the lone batch mean equals π_n.
        let x = lcg_samples(20, 3);
        let geom = BatchGeometry::new(20, 20).unwrap();
        assert!(obm_direct(&x, geom).unwrap().value.abs() < 1e-14);
        assert!(obm_quadratic(&x, geom).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn constant_samples_give_zero() {
        let x = vec![2.5; 40];
        let geom = BatchGeometry::new(40, 5).unwrap();
        assert!(obm_direct(&x, geom).unwrap().value.abs() < 1e-14);
        assert!(obm_quadratic(&x, geom).unwrap().value.abs() < 1e-10);
    }

    #[test]
    fn shift_invariant_and_scale_equivariant() {
        let x = lcg_samples(96, 17);
        let geom = BatchGeometry::new(96, 9).unwrap();
        let base = obm_direct(&x, geom).unwrap().value;

        let shifted: Vec<f64> = x.iter().map(|v| v + 10.0).collect();
        for est in [
            obm_direct(&shifted, geom).unwrap().value,
            obm_quadratic(&shifted, geom).unwrap().value,
        ] {
            assert_close(est, base, 1e-10 * (1.0 + base.abs()));
        }

        let scaled: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        assert_close(
            obm_direct(&scaled, geom).unwrap().value,
            9.0 * base,
            1e-12 * (1.0 + 9.0 * base.abs()),
        );
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let geom = BatchGeometry::new(10, 2).unwrap();
        assert!(matches!(
            obm_direct(&[1.0; 9], geom),
            Err(EstimatorError::DimensionMismatch { expected: 10, got: 9 })
        ));
        assert!(obm_quadratic(&[1.0; 10], geom).is_ok());
    }

    #[test]
    fn error_against_truth_is_signed() {
        let x = lcg_samples(64, 23);
        let geom = BatchGeometry::new(64, 8).unwrap();
        let est = obm_direct(&x, geom).unwrap();
        assert_close(est.error_against_truth(0.0), est.value, 1e-16);
        assert!(est.error_against_truth(est.value + 1.0) < 0.0);
    }
}
