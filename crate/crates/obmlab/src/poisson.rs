//! The Poisson equation `g − Pg = f` and three routes to the asymptotic
//! variance `σ²_∞(f)`.
//!
//! For a uniquely ergodic kernel and a π-centered `f`, the solution
//! `g = Σ_{k≥0} P^k f` is obtained here in closed form through the
//! fundamental matrix `(I − P + 1πᵀ)⁻¹`. The conditional variance of the
//! one-step martingale increment,
//!
//! ```text
//! ĝ(z) = P g²(z) − (P g(z))² ,
//! ```
//!
//! gives the variance as `σ²_∞(f) = π(ĝ)`. Two independent routes — the
//! autocovariance series `ρ(0) + 2 Σ_{ℓ≥1} ρ(ℓ)` and the pairing identity
//! `π(f²) + 2 π(f · Pg)` — are exposed so the solver can be cross-audited
//! instead of trusted.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::markov::{certify_mixing, MarkovError, StationaryDistribution, TransitionKernel};
use crate::summation::NeumaierSum;
use crate::tol;

/// Errors from centering and solving.
#[derive(Debug, thiserror::Error)]
pub enum PoissonError {
    /// `f` fails the centering precondition `π(f) = 0`.
    #[error("function is not centered: π(f) = {mean:e}")]
    NotCentered { mean: f64 },
    /// `f` is defined on a different state count than the kernel.
    #[error("dimension mismatch: function has {got} values, kernel has {expected} states")]
    DimensionMismatch { expected: usize, got: usize },
    /// The fundamental matrix `I − P + 1πᵀ` is numerically singular.
    #[error("fundamental matrix is singular (is the stationary law unique?)")]
    SingularFundamentalMatrix,
    /// The solve finished but `‖g − Pg − f‖_∞` is too large to trust.
    #[error("Poisson residual {residual:e} exceeds {tol:e}", tol = tol::POISSON_RESIDUAL)]
    ResidualTooLarge { residual: f64 },
    /// The conditional variance came out negative beyond round-off.
    #[error("conditional variance ĝ({state}) = {value:e} is negative beyond round-off")]
    NegativeConditionalVariance { state: usize, value: f64 },
    /// The autocovariance tail bound failed to drop below the tolerance.
    #[error("autocovariance tail did not reach {tail_tol:e} within {cap} lags")]
    TailNotConverged { tail_tol: f64, cap: usize },
    /// Underlying kernel problem (certification, etc.).
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

/// A state function with `π(f) = 0`, carrying its sup norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CenteredFunction {
    values: Vec<f64>,
    sup_norm: f64,
}

impl CenteredFunction {
    /// Center a raw function by subtracting `π(f)`.
    pub fn center(raw: &[f64], pi: &StationaryDistribution) -> Self {
        let mean = pi.expect(raw);
        let values: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let sup_norm = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Self { values, sup_norm }
    }

    /// Wrap values that are already centered; rejects `|π(f)| > 1e-12`.
    pub fn new_centered(
        values: Vec<f64>,
        pi: &StationaryDistribution,
    ) -> Result<Self, PoissonError> {
        let mean = pi.expect(&values);
        if mean.abs() > 1e-12 {
            return Err(PoissonError::NotCentered { mean });
        }
        let sup_norm = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(Self { values, sup_norm })
    }

    /// The centered values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `‖f‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
}

/// Solution bundle of the Poisson equation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoissonSolution {
    /// `g` with `g − Pg = f` and `π(g) = 0`.
    pub g: Vec<f64>,
    /// `Pg` evaluated at every state.
    pub p_g: Vec<f64>,
    /// Conditional increment variance `ĝ = Pg² − (Pg)²`.
    pub g_hat: Vec<f64>,
    /// `σ²_∞(f) = π(ĝ)`.
    pub sigma2_inf: f64,
}

/// Solve `g − Pg = f` via the fundamental matrix, with one refinement pass
/// and a residual audit.
pub fn solve_poisson(
    kernel: &TransitionKernel,
    pi: &StationaryDistribution,
    f: &CenteredFunction,
) -> Result<PoissonSolution, PoissonError> {
    let n = kernel.n_states();
    if f.values().len() != n {
        return Err(PoissonError::DimensionMismatch {
            expected: n,
            got: f.values().len(),
        });
    }
    // A = I − P + 1πᵀ is invertible exactly when π is the unique stationary
    // law; A g = f then has π(g) = π(f) = 0 automatically.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut v = if i == j { 1.0 } else { 0.0 };
            v -= kernel.matrix()[i * n + j];
            v += pi.probs()[j];
            a[i * n + j] = v;
        }
    }
    let mut g = linalg::solve_refined(&a, n, f.values())
        .ok_or(PoissonError::SingularFundamentalMatrix)?;
    // Re-center exactly against π (the solve leaves π(g) at round-off).
    let mean = pi.expect(&g);
    for v in g.iter_mut() {
        *v -= mean;
    }
    let p_g = kernel.apply(&g);

    let mut residual = 0.0_f64;
    for i in 0..n {
        residual = residual.max((g[i] - p_g[i] - f.values()[i]).abs());
    }
    if residual > tol::POISSON_RESIDUAL {
        return Err(PoissonError::ResidualTooLarge { residual });
    }

    let g_sq: Vec<f64> = g.iter().map(|v| v * v).collect();
    let p_g_sq = kernel.apply(&g_sq);
    let mut g_hat = vec![0.0; n];
    for i in 0..n {
        let v = p_g_sq[i] - p_g[i] * p_g[i];
        if v < -1e-12 {
            return Err(PoissonError::NegativeConditionalVariance { state: i, value: v });
        }
        g_hat[i] = v.max(0.0);
    }
    let sigma2_inf = pi.expect(&g_hat);
    Ok(PoissonSolution {
        g,
        p_g,
        g_hat,
        sigma2_inf,
    })
}

/// `σ²_∞(f)` through the martingale route `π(ĝ)` (fresh solve).
pub fn sigma2_by_martingale(
    kernel: &TransitionKernel,
    pi: &StationaryDistribution,
    f: &CenteredFunction,
) -> Result<f64, PoissonError> {
    Ok(solve_poisson(kernel, pi, f)?.sigma2_inf)
}

/// `σ²_∞(f)` as the autocovariance series `ρ(0) + 2 Σ_{ℓ≥1} ρ(ℓ)` with
/// `ρ(ℓ) = π(f · P^ℓ f)`, truncated once the uniform-mixing tail bound
/// drops below `tail_tol`.
pub fn sigma2_by_autocovariance(
    kernel: &TransitionKernel,
    pi: &StationaryDistribution,
    f: &CenteredFunction,
    tail_tol: f64,
) -> Result<f64, PoissonError> {
    let cert = certify_mixing(kernel, None)?;
    let t = cert.t_mix;
    let sup = f.sup_norm();
    let mut acc = NeumaierSum::new();
    // ρ(0) = π(f²).
    acc.add(pi.expect(
        &f.values().iter().map(|v| v * v).collect::<Vec<_>>(),
    ));
    let mut v = f.values().to_vec();
    // |2 Σ_{k>ℓ} ρ(k)| ≤ 4‖f‖²_∞ · (4/3) · t · (1/4)^{⌈(ℓ+1)/t⌉}: each lag is
    // bounded through ‖P^k f‖_∞ ≤ 2‖f‖_∞ (1/4)^{⌈k/t⌉}, summed in blocks of t.
    let tail_bound = |l: usize| -> f64 {
        4.0 * sup * sup * (4.0 / 3.0) * t as f64 * 0.25_f64.powi(((l + 1).div_ceil(t)) as i32)
    };
    let cap = 500 * t + 64;
    for l in 1..=cap {
        v = kernel.apply(&v);
        let rho = pi
            .probs()
            .iter()
            .zip(f.values())
            .zip(&v)
            .map(|((p, fv), vv)| p * fv * vv)
            .sum::<f64>();
        acc.add(2.0 * rho);
        if tail_bound(l) <= tail_tol {
            return Ok(acc.value());
        }
    }
    Err(PoissonError::TailNotConverged { tail_tol, cap })
}

/// `σ²_∞(f)` through the pairing identity `π(f²) + 2 π(f · Pg)`.
pub fn sigma2_by_pairing(
    pi: &StationaryDistribution,
    f: &CenteredFunction,
    solution: &PoissonSolution,
) -> f64 {
    let f2 = pi.expect(&f.values().iter().map(|v| v * v).collect::<Vec<_>>());
    let cross = pi.expect(
        &f.values()
            .iter()
            .zip(&solution.p_g)
            .map(|(fv, pg)| fv * pg)
            .collect::<Vec<_>>(),
    );
    f2 + 2.0 * cross
}

/// Uniform-mixing sup bound on the Poisson solution: `‖g‖_∞ ≤ (8/3) t_mix ‖f‖_∞`.
pub fn g_sup_bound(t_mix: usize, f_sup: f64) -> f64 {
    (8.0 / 3.0) * t_mix as f64 * f_sup
}
