//! Seeded Monte Carlo: moment experiments, rate fits, and inequality checks.
//!
//! The lab measures how fast the OBM error `σ̂² − σ²_∞` shrinks. For a
//! kernel with certified mixing time `t`, batch length `b` and `p`-th
//! moments, the tracked decay rate is
//!
//! ```text
//! rate(n, b, p, t) = p·t³/√n + p²·t²·√(b/n) + p²·t²/√b ,
//! ```
//!
//! and with the square-root batch rule `b = ⌈√n⌉` the dominant decay is
//! `n^{−1/4}`. [`run_moment_experiment`] estimates
//! `(E|σ̂² − σ²_∞|^p)^{1/p}` by seeded replication with percentile-bootstrap
//! intervals; [`fit_rate`] fits log–log slopes with jackknife error bars.
//!
//! Two supporting inequalities are checked head-on: a weighted-sum moment
//! bound ([`rosenthal_rhs`] / [`check_rosenthal`]) and the sub-Gaussian
//! moment growth of the standard normal ([`subgaussian_moment_bound`] /
//! [`standard_normal_moments`]). [`run_remainder_experiment`] tracks the
//! ledger's martingale-edge and boundary terms against their predicted
//! scales.
//!
//! # Determinism
//!
//! Replication `r` always draws from RNG stream `(base_seed, r)` and all
//! reductions happen in fixed order after a parallel map, so every report is
//! byte-identical for any worker count.

use rayon::prelude::*;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::decomp::decompose;
use crate::estimator::obm_value_fast;
use crate::markov::{
    certify_mixing, sample_path_stream, stationary, MarkovError, TransitionKernel,
};
use crate::poisson::{solve_poisson, CenteredFunction, PoissonError};
use crate::summation::NeumaierSum;
use crate::weights::{BatchGeometry, ObmWeights, WeightError};

/// Salt mixed into the base seed for bootstrap resampling, so bootstrap
/// draws never collide with replication streams.
const BOOTSTRAP_SALT: u64 = 0x626F_6F74_7374_7270; // "bootstrp"

/// Number of bootstrap resamples behind each interval.
const BOOTSTRAP_RESAMPLES: usize = 200;

/// Errors from experiment setup and fitting.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// The experiment description is unusable.
    #[error("bad experiment spec: {detail}")]
    BadSpec { detail: String },
    /// No parameter group has enough points for a fit.
    #[error("no group along axis {axis} has ≥ {min} usable points")]
    InsufficientGrid { axis: String, min: usize },
    /// Kernel / sampling failure.
    #[error(transparent)]
    Markov(#[from] MarkovError),
    /// Poisson-solver failure.
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    /// Geometry failure.
    #[error(transparent)]
    Weights(#[from] WeightError),
}

/// A replicated moment experiment: kernel, function, grid, and seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// The chain to sample.
    pub kernel: TransitionKernel,
    /// Label for the function (carried into reports).
    #[serde(default = "default_f_label")]
    pub f_label: String,
    /// Per-state values of `f` (centering happens internally).
    pub f_values: Vec<f64>,
    /// The `(n, b_n)` pairs to run.
    pub grid: Vec<BatchGeometry>,
    /// Moment orders `p`.
    #[serde(default = "default_p_list")]
    pub p_list: Vec<u32>,
    /// Replications per grid point.
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Base seed; replication `r` uses stream `(base_seed, r)`.
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    /// Initial distribution; `None` starts at stationarity.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

fn default_f_label() -> String {
    "f".to_string()
}

fn default_p_list() -> Vec<u32> {
    vec![2, 4]
}

fn default_replications() -> usize {
    500
}

fn default_base_seed() -> u64 {
    20260825
}

impl ExperimentSpec {
    /// The standard sweep grid: `n = 2^10, …, 2^16` with `b = ⌈√n⌉`.
    pub fn default_grid() -> Vec<BatchGeometry> {
        (10..=16)
            .map(|k| BatchGeometry::sqrt_rule(1usize << k).expect("valid"))
            .collect()
    }

    /// A spec with the standard grid, `p ∈ {2, 4}`, 500 replications.
    pub fn standard(kernel: TransitionKernel, f_values: Vec<f64>) -> Self {
        Self {
            kernel,
            f_label: default_f_label(),
            f_values,
            grid: Self::default_grid(),
            p_list: default_p_list(),
            replications: default_replications(),
            base_seed: default_base_seed(),
            initial: None,
        }
    }

    fn validate(&self) -> Result<(), LabError> {
        let bad = |detail: String| Err(LabError::BadSpec { detail });
        if self.f_values.len() != self.kernel.n_states() {
            return bad(format!(
                "f has {} values for a {}-state kernel",
                self.f_values.len(),
                self.kernel.n_states()
            ));
        }
        if self.grid.is_empty() {
            return bad("empty grid".into());
        }
        if self.p_list.is_empty() || self.p_list.contains(&0) {
            return bad("p_list must be nonempty with every p ≥ 1".into());
        }
        if self.replications < 2 {
            return bad("need at least 2 replications".into());
        }
        Ok(())
    }
}

/// One `(n, b, p)` cell of a moment experiment.
#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    /// Path length.
    pub n: usize,
    /// Batch length.
    pub b_n: usize,
    /// Moment order.
    pub p: u32,
    /// Replications.
    pub replications: usize,
    /// `(R⁻¹ Σ_r |σ̂²_r − σ²_∞|^p)^{1/p}`.
    pub moment: f64,
    /// Percentile-bootstrap lower endpoint (2.5%).
    pub moment_se_lo: f64,
    /// Percentile-bootstrap upper endpoint (97.5%).
    pub moment_se_hi: f64,
    /// The tracked rate `p·t³/√n + p²·t²·√(b/n) + p²·t²/√b`.
    pub theory_rate: f64,
    /// Base seed of the experiment.
    pub base_seed: u64,
    /// Whether the bootstrap interval is wide (`hi/lo > 2`).
    pub unstable: bool,
}

/// Full report of a moment experiment.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    /// Kernel label.
    pub kernel_label: String,
    /// Function label.
    pub f_label: String,
    /// Ground-truth asymptotic variance from the Poisson solve.
    pub sigma2_inf: f64,
    /// Certified mixing time.
    pub t_mix: usize,
    /// Base seed.
    pub base_seed: u64,
    /// Replications per cell.
    pub replications: usize,
    /// One row per `(n, b, p)`.
    pub rows: Vec<MomentRow>,
}

/// The tracked rate (see the module docs).
pub fn theory_rate(n: usize, b: usize, p: u32, t_mix: usize) -> f64 {
    let (nf, bf, pf, tf) = (n as f64, b as f64, p as f64, t_mix as f64);
    pf * tf.powi(3) / nf.sqrt()
        + pf * pf * tf * tf * (bf / nf).sqrt()
        + pf * pf * tf * tf / bf.sqrt()
}

fn p_norm(errs: &[f64], p: u32) -> f64 {
    let mean = NeumaierSum::total(errs.iter().map(|e| e.abs().powi(p as i32)))
        / errs.len() as f64;
    mean.powf(1.0 / p as f64)
}

/// Percentile bootstrap endpoints for the `p`-norm of `errs`.
fn bootstrap_interval(errs: &[f64], p: u32, seed: u64, stream: u64) -> (f64, f64) {
    let r = errs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ BOOTSTRAP_SALT);
    rng.set_stream(stream);
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut resample = vec![0.0; r];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in resample.iter_mut() {
            *slot = errs[rng.random_range(0..r)];
        }
        stats.push(p_norm(&resample, p));
    }
    stats.sort_by(|a, b| a.total_cmp(b));
    let lo = stats[(0.025 * BOOTSTRAP_RESAMPLES as f64).floor() as usize];
    let hi = stats[((0.975 * BOOTSTRAP_RESAMPLES as f64).ceil() as usize)
        .min(BOOTSTRAP_RESAMPLES - 1)];
    (lo, hi)
}

/// Run a replicated moment experiment.
///
/// For each grid point, replication `r` samples a fresh path on RNG stream
/// `(base_seed, r)` (the same stream across grid points — common random
/// numbers), computes `σ̂² − σ²_∞` with the `O(n)` sliding estimator, and
/// the `p`-norms of the error are reported with bootstrap intervals.
pub fn run_moment_experiment(spec: &ExperimentSpec) -> Result<MomentReport, LabError> {
    spec.validate()?;
    let pi = stationary(&spec.kernel)?;
    let f = CenteredFunction::center(&spec.f_values, &pi);
    let sol = solve_poisson(&spec.kernel, &pi, &f)?;
    let cert = certify_mixing(&spec.kernel, None)?;
    let initial = spec.initial.clone().unwrap_or_else(|| pi.probs().to_vec());

    let mut rows = Vec::with_capacity(spec.grid.len() * spec.p_list.len());
    for (gi, geom) in spec.grid.iter().enumerate() {
        let (n, b) = (geom.n(), geom.b());
        let errs: Vec<f64> = (0..spec.replications)
            .into_par_iter()
            .map(|r| -> Result<f64, LabError> {
                let path =
                    sample_path_stream(&spec.kernel, &initial, n, spec.base_seed, r as u64)?;
                let x = path.f_samples(f.values());
                Ok(obm_value_fast(&x, b) - sol.sigma2_inf)
            })
            .collect::<Result<_, _>>()?;
        for (pi_idx, &p) in spec.p_list.iter().enumerate() {
            let moment = p_norm(&errs, p);
            let stream = (gi * spec.p_list.len() + pi_idx) as u64;
            let (lo, hi) = bootstrap_interval(&errs, p, spec.base_seed, stream);
            rows.push(MomentRow {
                n,
                b_n: b,
                p,
                replications: spec.replications,
                moment,
                moment_se_lo: lo,
                moment_se_hi: hi,
                theory_rate: theory_rate(n, b, p, cert.t_mix),
                base_seed: spec.base_seed,
                unstable: lo > 0.0 && hi / lo > 2.0,
            });
        }
    }
    Ok(MomentReport {
        kernel_label: spec.kernel.label().to_string(),
        f_label: spec.f_label.clone(),
        sigma2_inf: sol.sigma2_inf,
        t_mix: cert.t_mix,
        base_seed: spec.base_seed,
        replications: spec.replications,
        rows,
    })
}

/// Which grid coordinate a rate fit varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateAxis {
    /// Slope of `log moment` against `log n` (groups share `p`).
    N,
    /// Slope against `log b_n` (groups share `n` and `p`).
    B,
}

impl RateAxis {
    fn name(self) -> &'static str {
        match self {
            RateAxis::N => "n",
            RateAxis::B => "b",
        }
    }
}

/// A fitted log–log slope with a jackknife interval.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    /// Group tag, e.g. `n:p=2` or `b:n=4096:p=2`.
    pub axis: String,
    /// OLS slope of `log moment` on the axis coordinate.
    pub slope: f64,
    /// `slope − 2·SE_jackknife`.
    pub ci_lo: f64,
    /// `slope + 2·SE_jackknife`.
    pub ci_hi: f64,
    /// Points in the group.
    pub points: usize,
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - xbar) * (y - ybar);
        den += (x - xbar) * (x - xbar);
    }
    num / den
}

const MIN_FIT_POINTS: usize = 4;

/// Fit log–log slopes along `axis`, one fit per group of rows that share
/// the remaining coordinates. Groups with fewer than 4 usable points are
/// skipped; if none remain the grid is insufficient.
pub fn fit_rate(report: &MomentReport, axis: RateAxis) -> Result<Vec<RateFit>, LabError> {
    // Group keys in first-appearance order, for stable output.
    let mut keys: Vec<(usize, u32)> = Vec::new();
    for row in &report.rows {
        let key = match axis {
            RateAxis::N => (0usize, row.p),
            RateAxis::B => (row.n, row.p),
        };
        if !keys.contains(&key) {
            keys.push(key);
        }
    }

    let mut fits = Vec::new();
    for key in keys {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for row in &report.rows {
            let (row_key, coord) = match axis {
                RateAxis::N => ((0usize, row.p), row.n),
                RateAxis::B => ((row.n, row.p), row.b_n),
            };
            if row_key == key && row.moment > 0.0 {
                xs.push((coord as f64).ln());
                ys.push(row.moment.ln());
            }
        }
        let distinct = {
            let mut seen = xs.clone();
            seen.sort_by(|a, b| a.total_cmp(b));
            seen.dedup();
            seen.len()
        };
        if xs.len() < MIN_FIT_POINTS || distinct < 2 {
            continue;
        }
        let slope = ols_slope(&xs, &ys);
        // Delete-one jackknife.
        let m = xs.len();
        let mut loo = Vec::with_capacity(m);
        for i in 0..m {
            let xs_i: Vec<f64> = xs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| *v)
                .collect();
            let ys_i: Vec<f64> = ys
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| *v)
                .collect();
            loo.push(ols_slope(&xs_i, &ys_i));
        }
        let loo_bar = loo.iter().sum::<f64>() / m as f64;
        let se = ((m as f64 - 1.0) / m as f64
            * loo.iter().map(|v| (v - loo_bar) * (v - loo_bar)).sum::<f64>())
        .sqrt();
        let tag = match axis {
            RateAxis::N => format!("n:p={}", key.1),
            RateAxis::B => format!("b:n={}:p={}", key.0, key.1),
        };
        fits.push(RateFit {
            axis: tag,
            slope,
            ci_lo: slope - 2.0 * se,
            ci_hi: slope + 2.0 * se,
            points: m,
        });
    }
    if fits.is_empty() {
        return Err(LabError::InsufficientGrid {
            axis: axis.name().to_string(),
            min: MIN_FIT_POINTS,
        });
    }
    Ok(fits)
}

/// The closed-form right-hand side of the weighted-sum moment inequality:
/// for coefficients `β_1, …, β_n`, a certified mixing time `t`, and a
/// bounded centered function (`‖f‖_∞ = f_sup`, stationary start),
///
/// ```text
/// rhs = 16/3 · t · √p · f_sup · (Σ_{k=2}^n β_k²)^{1/2}
///     + 8/3 · t · (|β_1| + |β_n| + Σ_{k=1}^{n−1} |β_{k+1} − β_k|) · f_sup .
/// ```
///
/// With `n = 1` both interior sums are empty and the bound degrades to
/// `16/3 · t · |β_1| · f_sup`.
pub fn rosenthal_rhs(t_mix: usize, p: u32, f_sup: f64, betas: &[f64]) -> f64 {
    let n = betas.len();
    if n == 0 {
        return 0.0;
    }
    let t = t_mix as f64;
    let quad = NeumaierSum::total(betas[1..].iter().map(|b| b * b)).sqrt();
    let mut variation = NeumaierSum::new();
    for k in 0..n - 1 {
        variation.add((betas[k + 1] - betas[k]).abs());
    }
    let bv = betas[0].abs() + betas[n - 1].abs() + variation.value();
    16.0 / 3.0 * t * (p as f64).sqrt() * f_sup * quad + 8.0 / 3.0 * t * bv * f_sup
}

/// Monte Carlo check of the weighted-sum moment inequality.
#[derive(Debug, Clone, Serialize)]
pub struct RosenthalCheck {
    /// Empirical `(E|Σ β_k f(Z_k)|^p)^{1/p}` from stationary starts.
    pub lhs: f64,
    /// Closed-form bound.
    pub rhs: f64,
    /// `lhs / rhs`.
    pub ratio: f64,
    /// Whether `lhs ≤ rhs`.
    pub pass: bool,
    /// Moment order.
    pub p: u32,
    /// Number of coefficients (= path length).
    pub n: usize,
    /// Certified mixing time used in the bound.
    pub t_mix: usize,
}

/// Estimate the left side of the weighted-sum inequality by replication
/// (stationary start, stream-per-replication) and compare with
/// [`rosenthal_rhs`].
pub fn check_rosenthal(
    kernel: &TransitionKernel,
    f_raw: &[f64],
    betas: &[f64],
    p: u32,
    replications: usize,
    seed: u64,
) -> Result<RosenthalCheck, LabError> {
    if betas.is_empty() || replications < 2 || p == 0 {
        return Err(LabError::BadSpec {
            detail: "need n ≥ 1 coefficients, p ≥ 1, and ≥ 2 replications".into(),
        });
    }
    let pi = stationary(kernel)?;
    let f = CenteredFunction::center(f_raw, &pi);
    let cert = certify_mixing(kernel, None)?;
    let n = betas.len();
    let powers: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|r| -> Result<f64, LabError> {
            let path = sample_path_stream(kernel, pi.probs(), n, seed, r as u64)?;
            let x = path.f_samples(f.values());
            let s = NeumaierSum::total(x.iter().zip(betas).map(|(xi, b)| b * xi));
            Ok(s.abs().powi(p as i32))
        })
        .collect::<Result<_, _>>()?;
    let lhs = (NeumaierSum::total(powers.iter().copied()) / replications as f64)
        .powf(1.0 / p as f64);
    let rhs = rosenthal_rhs(cert.t_mix, p, f.sup_norm(), betas);
    Ok(RosenthalCheck {
        lhs,
        rhs,
        ratio: lhs / rhs,
        pass: lhs <= rhs,
        p,
        n,
        t_mix: cert.t_mix,
    })
}

/// `2^{1/p} · √p · σ`: the `p`-norm bound for a mean-zero sub-Gaussian
/// variable with parameter `σ`.
pub fn subgaussian_moment_bound(p: u32, sigma: f64) -> f64 {
    2.0_f64.powf(1.0 / p as f64) * (p as f64).sqrt() * sigma
}

/// One moment order of the standard-normal check.
#[derive(Debug, Clone, Serialize)]
pub struct NormalMomentRow {
    /// Moment order.
    pub p: u32,
    /// Empirical `(m⁻¹ Σ |X_i|^p)^{1/p}`.
    pub empirical: f64,
    /// `2^{1/p}·√p` (σ = 1).
    pub bound: f64,
    /// Draws used.
    pub draws: usize,
}

/// Draw `m` standard normals (seeded) and report `p`-norms against the
/// sub-Gaussian bound, one pass for all orders.
pub fn standard_normal_moments(draws: usize, seed: u64, ps: &[u32]) -> Vec<NormalMomentRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc: Vec<NeumaierSum> = ps.iter().map(|_| NeumaierSum::new()).collect();
    for _ in 0..draws {
        let x: f64 = StandardNormal.sample(&mut rng);
        let a = x.abs();
        for (slot, &p) in acc.iter_mut().zip(ps) {
            slot.add(a.powi(p as i32));
        }
    }
    ps.iter()
        .zip(acc)
        .map(|(&p, slot)| NormalMomentRow {
            p,
            empirical: (slot.value() / draws as f64).powf(1.0 / p as f64),
            bound: subgaussian_moment_bound(p, 1.0),
            draws,
        })
        .collect()
}

/// Predicted scales for the ledger's non-martingale terms.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RemainderBounds {
    /// Martingale edge part `R_mart`: `t²/b`.
    pub mart: f64,
    /// Boundary part `R_rem`: `p·t²·√b/N₁ + t²/b`.
    pub rem: f64,
    /// Whole remainder `R̄`: `p·t²/√b + p·t²·√b/N₁ + t²/b`.
    pub total: f64,
}

/// Evaluate the predicted remainder scales at a geometry.
pub fn remainder_bound_formulas(t_mix: usize, p: u32, geom: BatchGeometry) -> RemainderBounds {
    let t2 = (t_mix * t_mix) as f64;
    let pf = p as f64;
    let b = geom.b() as f64;
    let n1 = geom.windows() as f64;
    let mart = t2 / b;
    let rem = pf * t2 * b.sqrt() / n1 + t2 / b;
    let total = pf * t2 / b.sqrt() + pf * t2 * b.sqrt() / n1 + t2 / b;
    RemainderBounds { mart, rem, total }
}

/// One grid point of a remainder-tracking experiment.
#[derive(Debug, Clone, Serialize)]
pub struct RemainderRow {
    /// Path length.
    pub n: usize,
    /// Batch length.
    pub b_n: usize,
    /// Moment order.
    pub p: u32,
    /// Replications.
    pub replications: usize,
    /// `p`-norm of `R_mart` over replications.
    pub moment_mart: f64,
    /// Predicted scale for `R_mart`.
    pub bound_mart: f64,
    /// `moment_mart / bound_mart`.
    pub ratio_mart: f64,
    /// `p`-norm of `R_rem`.
    pub moment_rem: f64,
    /// Predicted scale for `R_rem`.
    pub bound_rem: f64,
    /// `moment_rem / bound_rem`.
    pub ratio_rem: f64,
    /// `p`-norm of `R̄`.
    pub moment_rbar: f64,
    /// Predicted scale for `R̄`.
    pub bound_total: f64,
    /// `moment_rbar / bound_total`.
    pub ratio_rbar: f64,
}

/// Track the ledger's remainder terms against their predicted scales over a
/// grid. The interesting output is the ratio columns: if the predictions
/// capture the true decay, each ratio stays within a small constant band
/// across the whole grid.
pub fn run_remainder_experiment(
    kernel: &TransitionKernel,
    f_raw: &[f64],
    grid: &[BatchGeometry],
    p: u32,
    replications: usize,
    base_seed: u64,
) -> Result<Vec<RemainderRow>, LabError> {
    if grid.is_empty() || replications < 2 || p == 0 {
        return Err(LabError::BadSpec {
            detail: "need a nonempty grid, p ≥ 1, and ≥ 2 replications".into(),
        });
    }
    let pi = stationary(kernel)?;
    let f = CenteredFunction::center(f_raw, &pi);
    let sol = solve_poisson(kernel, &pi, &f)?;
    let cert = certify_mixing(kernel, None)?;

    let mut rows = Vec::with_capacity(grid.len());
    for geom in grid {
        let (n, b) = (geom.n(), geom.b());
        let weights = ObmWeights::new(*geom);
        let terms: Vec<(f64, f64, f64)> = (0..replications)
            .into_par_iter()
            .map(|r| -> Result<(f64, f64, f64), LabError> {
                let path = sample_path_stream(kernel, pi.probs(), n, base_seed, r as u64)?;
                let ledger = decompose(&path, f.values(), &weights, &sol)
                    .expect("validated dimensions");
                Ok((ledger.r_mart, ledger.r_rem, ledger.r_bar))
            })
            .collect::<Result<_, _>>()?;
        let column = |sel: fn(&(f64, f64, f64)) -> f64| -> f64 {
            let vals: Vec<f64> = terms.iter().map(sel).collect();
            p_norm(&vals, p)
        };
        let moment_mart = column(|t| t.0);
        let moment_rem = column(|t| t.1);
        let moment_rbar = column(|t| t.2);
        let bounds = remainder_bound_formulas(cert.t_mix, p, *geom);
        rows.push(RemainderRow {
            n,
            b_n: b,
            p,
            replications,
            moment_mart,
            bound_mart: bounds.mart,
            ratio_mart: moment_mart / bounds.mart,
            moment_rem,
            bound_rem: bounds.rem,
            ratio_rem: moment_rem / bounds.rem,
            moment_rbar,
            bound_total: bounds.total,
            ratio_rbar: moment_rbar / bounds.total,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> TransitionKernel {
        TransitionKernel::two_state(0.3, 0.1).unwrap()
    }

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            kernel: two_state(),
            f_label: "indicator".into(),
            f_values: vec![1.0, 0.0],
            grid: vec![
                BatchGeometry::new(128, 12).unwrap(),
                BatchGeometry::new(256, 16).unwrap(),
            ],
            p_list: vec![2, 4, 8],
            replications: 120,
            base_seed: 7,
            initial: None,
        }
    }

    #[test]
    fn moments_are_monotone_in_p() {
        // Power-mean inequality: p-norms of the same sample never decrease.
        let report = run_moment_experiment(&tiny_spec()).unwrap();
        for pair in report.rows.chunks(3) {
            assert!(pair[0].moment <= pair[1].moment + 1e-15);
            assert!(pair[1].moment <= pair[2].moment + 1e-15);
            assert_eq!((pair[0].p, pair[1].p, pair[2].p), (2, 4, 8));
        }
    }

    #[test]
    fn bootstrap_interval_is_ordered_and_positive() {
        let report = run_moment_experiment(&tiny_spec()).unwrap();
        for row in &report.rows {
            assert!(row.moment_se_lo > 0.0);
            assert!(row.moment_se_lo <= row.moment_se_hi);
            assert!(row.moment_se_lo <= row.moment * 1.5);
            assert!(row.moment_se_hi >= row.moment * 0.5);
        }
    }

    #[test]
    fn reports_are_identical_across_worker_counts() {
        let spec = tiny_spec();
        let run_in = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| run_moment_experiment(&spec).unwrap())
        };
        let a = serde_json::to_string(&run_in(1)).unwrap();
        let b = serde_json::to_string(&run_in(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_power_law_is_recovered_exactly() {
        let rows: Vec<MomentRow> = [1024usize, 2048, 4096, 8192, 16384]
            .iter()
            .map(|&n| MomentRow {
                n,
                b_n: 32,
                p: 2,
                replications: 1,
                moment: 3.0 * (n as f64).powf(-0.25),
                moment_se_lo: 0.0,
                moment_se_hi: 0.0,
                theory_rate: 0.0,
                base_seed: 0,
                unstable: false,
            })
            .collect();
        let report = MomentReport {
            kernel_label: "synthetic".into(),
            f_label: "f".into(),
            sigma2_inf: 1.0,
            t_mix: 1,
            base_seed: 0,
            replications: 1,
            rows,
        };
        let fits = fit_rate(&report, RateAxis::N).unwrap();
        assert_eq!(fits.len(), 1);
        assert_eq!(fits[0].axis, "n:p=2");
        assert_eq!(fits[0].points, 5);
        assert!((fits[0].slope + 0.25).abs() < 1e-12, "slope {}", fits[0].slope);
        assert!(fits[0].ci_hi - fits[0].ci_lo < 1e-10);
        assert!(fits[0].ci_lo <= fits[0].slope && fits[0].slope <= fits[0].ci_hi);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let rows: Vec<MomentRow> = [64usize, 128, 256]
            .iter()
            .map(|&n| MomentRow {
                n,
                b_n: 8,
                p: 2,
                replications: 1,
                moment: (n as f64).powf(-0.5),
                moment_se_lo: 0.0,
                moment_se_hi: 0.0,
                theory_rate: 0.0,
                base_seed: 0,
                unstable: false,
            })
            .collect();
        let report = MomentReport {
            kernel_label: "synthetic".into(),
            f_label: "f".into(),
            sigma2_inf: 1.0,
            t_mix: 1,
            base_seed: 0,
            replications: 1,
            rows,
        };
        assert!(matches!(
            fit_rate(&report, RateAxis::N),
            Err(LabError::InsufficientGrid { .. })
        ));
    }

    #[test]
    fn rosenthal_rhs_hand_values() {
        // t = 1, p = 4, sup = 0.5, β = (1,1,1): quadratic part √2 over
        // k ≥ 2, boundary part |β₁| + |β₃| = 2, zero variation.
        let rhs = rosenthal_rhs(1, 4, 0.5, &[1.0, 1.0, 1.0]);
        let expect = 16.0 / 3.0 * 2.0 * 0.5 * 2.0_f64.sqrt() + 8.0 / 3.0 * 2.0 * 0.5;
        assert!((rhs - expect).abs() < 1e-14);

        // Length-1 convention: only the boundary terms survive.
        let rhs1 = rosenthal_rhs(3, 2, 1.0, &[2.0]);
        assert!((rhs1 - 8.0 / 3.0 * 3.0 * 4.0).abs() < 1e-14);

        assert_eq!(rosenthal_rhs(3, 2, 1.0, &[]), 0.0);
    }

    #[test]
    fn rosenthal_bound_holds_on_a_small_case() {
        let check = check_rosenthal(
            &two_state(),
            &[1.0, 0.0],
            &vec![1.0; 100],
            2,
            400,
            11,
        )
        .unwrap();
        assert!(check.pass, "lhs {} vs rhs {}", check.lhs, check.rhs);
        assert!(check.ratio < 0.5, "bound unexpectedly tight: {}", check.ratio);
    }

    #[test]
    fn normal_moments_stay_under_the_subgaussian_bound() {
        let rows = standard_normal_moments(20_000, 5, &[2, 4]);
        // True values: 1 and (3)^{1/4} ≈ 1.316; bounds √2·√2 = 2 and
        // 2^{1/4}·2 ≈ 2.38.
        assert!((rows[0].empirical - 1.0).abs() < 0.05);
        for row in &rows {
            assert!(row.empirical < row.bound, "p = {}", row.p);
        }
        assert!((subgaussian_moment_bound(2, 1.5) - 2.0_f64.sqrt() * 2.0_f64.sqrt() * 1.5).abs() < 1e-12);
    }

    #[test]
    fn remainder_bounds_hand_values() {
        let geom = BatchGeometry::new(100, 25).unwrap(); // N₁ = 76
        let b = remainder_bound_formulas(2, 3, geom);
        let t2 = 4.0;
        assert!((b.mart - t2 / 25.0).abs() < 1e-14);
        assert!((b.rem - (3.0 * t2 * 5.0 / 76.0 + t2 / 25.0)).abs() < 1e-14);
        assert!((b.total - (3.0 * t2 / 5.0 + 3.0 * t2 * 5.0 / 76.0 + t2 / 25.0)).abs() < 1e-14);
    }

    #[test]
    fn remainder_tracking_produces_finite_ratios() {
        let grid = [
            BatchGeometry::new(128, 11).unwrap(),
            BatchGeometry::new(256, 16).unwrap(),
        ];
        let rows =
            run_remainder_experiment(&two_state(), &[1.0, 0.0], &grid, 2, 60, 13).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            for v in [
                row.moment_mart,
                row.moment_rem,
                row.moment_rbar,
                row.ratio_mart,
                row.ratio_rem,
                row.ratio_rbar,
            ] {
                assert!(v.is_finite() && v >= 0.0);
            }
            assert!(row.moment_rbar > 0.0);
        }
    }

    #[test]
    fn remainder_ratios_are_stable_across_scales() {
        // Measured/predicted for each remainder family should sit in a
        // narrow band even as n grows 16× — the predictions capture the
        // decay, not merely dominate it.
        let grid: Vec<BatchGeometry> = [512usize, 2048, 8192]
            .into_iter()
            .map(|n| BatchGeometry::sqrt_rule(n).unwrap())
            .collect();
        let rows =
            run_remainder_experiment(&two_state(), &[1.0, 0.0], &grid, 2, 150, 99).unwrap();
        for pick in [
            |r: &RemainderRow| r.ratio_mart,
            |r: &RemainderRow| r.ratio_rem,
            |r: &RemainderRow| r.ratio_rbar,
        ] {
            let ratios: Vec<f64> = rows.iter().map(pick).collect();
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
            assert!(hi <= 3.0, "measured moment overshoots its scale: {ratios:?}");
            assert!(lo > 0.0 && hi / lo <= 3.0, "unstable ratios: {ratios:?}");
        }
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut spec = tiny_spec();
        spec.f_values = vec![1.0];
        assert!(matches!(
            run_moment_experiment(&spec),
            Err(LabError::BadSpec { .. })
        ));
        let mut spec = tiny_spec();
        spec.p_list.clear();
        assert!(matches!(
            run_moment_experiment(&spec),
            Err(LabError::BadSpec { .. })
        ));
        let mut spec = tiny_spec();
        spec.replications = 1;
        assert!(matches!(
            run_moment_experiment(&spec),
            Err(LabError::BadSpec { .. })
        ));
        assert!(check_rosenthal(&two_state(), &[1.0, 0.0], &[], 2, 10, 1).is_err());
    }

    #[test]
    fn experiment_spec_round_trips_through_json() {
        let spec = tiny_spec();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.grid.len(), 2);
        assert_eq!(back.p_list, vec![2, 4, 8]);
        assert_eq!(back.base_seed, 7);
        assert_eq!(back.kernel.n_states(), 2);

        // Defaults kick in for omitted fields.
        let minimal = r#"{
            "kernel": {"label": "k", "n_states": 2,
                       "rows": [[0.7, 0.3], [0.1, 0.9]]},
            "f_values": [1.0, 0.0],
            "grid": [{"n": 64, "b_n": 8}]
        }"#;
        let spec: ExperimentSpec = serde_json::from_str(minimal).unwrap();
        assert_eq!(spec.p_list, vec![2, 4]);
        assert_eq!(spec.replications, 500);
        assert_eq!(spec.base_seed, 20260825);
        assert!(spec.initial.is_none());
        assert_eq!(spec.f_label, "f");
    }

    #[test]
    fn default_grid_is_the_standard_sweep() {
        let grid = ExperimentSpec::default_grid();
        assert_eq!(grid.len(), 7);
        assert_eq!(grid[0].n(), 1024);
        assert_eq!(grid[0].b(), 32);
        assert_eq!(grid[6].n(), 65536);
        assert_eq!(grid[6].b(), 256);
    }
}
