//! Finite-state Markov kernels: validation, stationary distributions,
//! uniform-mixing certificates, and seeded path sampling.
//!
//! A kernel is a row-stochastic matrix `P` over states `{0, …, k−1}`. The
//! mixing certificate measures the worst-pair total-variation contraction
//! `δ(P^t) = max_{z,z'} d_tv(P^t(z,·), P^t(z',·))` and reports the smallest
//! `t` with `δ(P^t) ≤ 1/4`; every chain in the bundled library admits such a
//! `t`, which drives all downstream tail bounds.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::summation::NeumaierSum;
use crate::tol;

/// Errors from kernel construction, certification, and sampling.
#[derive(Debug, thiserror::Error)]
pub enum MarkovError {
    /// A row of the transition matrix does not sum to 1.
    #[error("row {row} sums to {sum:.17} (must equal 1 within {tol:e})", tol = tol::ROW_SUM)]
    RowNotStochastic { row: usize, sum: f64 },
    /// A transition probability is negative.
    #[error("entry ({row},{col}) is negative: {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    /// The matrix is not square or is empty.
    #[error("expected a square matrix with {expected} columns per row, row {row} has {got}")]
    ShapeMismatch { row: usize, expected: usize, got: usize },
    /// The chain has no unique stationary distribution (reducible or
    /// numerically rank-deficient balance equations).
    #[error("no unique stationary distribution: {detail}")]
    NoUniqueStationary { detail: String },
    /// No power of the kernel contracted below 1/4 within the cap.
    #[error("mixing not certified within {cap} steps (last contraction {last:.6})")]
    MixingNotCertified { cap: usize, last: f64 },
    /// Library dispatch got a name it does not know.
    #[error("unknown kernel name {name:?} (available: {available})")]
    UnknownKernelName { name: String, available: String },
    /// A library constructor got a missing or malformed parameter.
    #[error("bad parameter for kernel {name:?}: {detail}")]
    BadParam { name: String, detail: String },
    /// An initial distribution is not a probability vector.
    #[error("bad initial distribution: {detail}")]
    BadInitialDistribution { detail: String },
}

/// Serialized form of a kernel: `{label, n_states, rows}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelFile {
    pub label: String,
    pub n_states: usize,
    pub rows: Vec<Vec<f64>>,
}

/// A validated row-stochastic transition matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(try_from = "KernelFile")]
pub struct TransitionKernel {
    label: String,
    n_states: usize,
    rows: Vec<f64>, // row-major n_states × n_states
}

impl TryFrom<KernelFile> for TransitionKernel {
    type Error = MarkovError;
    fn try_from(file: KernelFile) -> Result<Self, MarkovError> {
        if file.rows.len() != file.n_states {
            return Err(MarkovError::ShapeMismatch {
                row: file.rows.len(),
                expected: file.n_states,
                got: file.rows.len(),
            });
        }
        TransitionKernel::new(&file.label, file.rows)
    }
}

impl From<TransitionKernel> for KernelFile {
    fn from(k: TransitionKernel) -> KernelFile {
        let rows = (0..k.n_states).map(|i| k.row(i).to_vec()).collect();
        KernelFile {
            label: k.label,
            n_states: k.n_states,
            rows,
        }
    }
}

impl Serialize for TransitionKernel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        KernelFile::from(self.clone()).serialize(s)
    }
}

impl fmt::Display for TransitionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} states)", self.label, self.n_states)
    }
}

impl TransitionKernel {
    /// Validate and build a kernel from nested rows.
    pub fn new(label: &str, rows: Vec<Vec<f64>>) -> Result<Self, MarkovError> {
        let n = rows.len();
        if n == 0 {
            return Err(MarkovError::ShapeMismatch {
                row: 0,
                expected: 1,
                got: 0,
            });
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(MarkovError::ShapeMismatch {
                    row: i,
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &p) in row.iter().enumerate() {
                if p < 0.0 {
                    return Err(MarkovError::NegativeEntry {
                        row: i,
                        col: j,
                        value: p,
                    });
                }
            }
            let sum = NeumaierSum::total(row.iter().copied());
            if (sum - 1.0).abs() > tol::ROW_SUM {
                return Err(MarkovError::RowNotStochastic { row: i, sum });
            }
            flat.extend_from_slice(row);
        }
        Ok(Self {
            label: label.to_string(),
            n_states: n,
            rows: flat,
        })
    }

    /// Number of states.
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Human-readable label carried through files and manifests.
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Row `i` of the matrix: the law of the next state given state `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n_states..(i + 1) * self.n_states]
    }

    /// Flat row-major matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.rows
    }

    /// Apply the kernel to a function: `(Pf)(z) = Σ_x P(z,x) f(x)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n_states);
        linalg::mat_vec(&self.rows, self.n_states, f)
    }

    /// Two-state chain: stays in 0 with probability `1−a`, in 1 with `1−b`.
    pub fn two_state(a: f64, b: f64) -> Result<Self, MarkovError> {
        for (name, v) in [("a", a), ("b", b)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MarkovError::BadParam {
                    name: "two_state".into(),
                    detail: format!("{name} = {v} outside [0,1]"),
                });
            }
        }
        Self::new(
            &format!("two_state(a={a},b={b})"),
            vec![vec![1.0 - a, a], vec![b, 1.0 - b]],
        )
    }

    /// Lazy random walk on an `m`-cycle: hold 1/2, step each way 1/4.
    pub fn lazy_cycle(m: usize) -> Result<Self, MarkovError> {
        if m == 0 {
            return Err(MarkovError::BadParam {
                name: "lazy_cycle".into(),
                detail: "m must be at least 1".into(),
            });
        }
        let mut rows = vec![vec![0.0; m]; m];
        for (z, row) in rows.iter_mut().enumerate() {
            row[z] += 0.5;
            row[(z + 1) % m] += 0.25;
            row[(z + m - 1) % m] += 0.25;
        }
        Self::new(&format!("lazy_cycle(m={m})"), rows)
    }

    /// Random kernel with independent Dirichlet(α,…,α) rows; strictly
    /// positive entries almost surely, hence uniformly ergodic.
    pub fn dirichlet_random(n_states: usize, alpha: f64, seed: u64) -> Result<Self, MarkovError> {
        if n_states < 2 {
            return Err(MarkovError::BadParam {
                name: "dirichlet_random".into(),
                detail: "n_states must be at least 2".into(),
            });
        }
        if alpha.is_nan() || alpha <= 0.0 {
            return Err(MarkovError::BadParam {
                name: "dirichlet_random".into(),
                detail: format!("alpha = {alpha} must be positive"),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
        let mut rows = vec![vec![0.0; n_states]; n_states];
        for row in rows.iter_mut() {
            loop {
                let mut sum = 0.0;
                for cell in row.iter_mut() {
                    let x: f64 = gamma.sample(&mut rng);
                    *cell = x;
                    sum += x;
                }
                if sum > 0.0 {
                    for cell in row.iter_mut() {
                        *cell /= sum;
                    }
                    // Exact re-normalization of the largest entry keeps the
                    // row sum within the validation tolerance.
                    let total = NeumaierSum::total(row.iter().copied());
                    let imax = (0..n_states)
                        .max_by(|&i, &j| row[i].partial_cmp(&row[j]).unwrap())
                        .unwrap();
                    row[imax] += 1.0 - total;
                    break;
                }
            }
        }
        Self::new(&format!("dirichlet_random(k={n_states},seed={seed})"), rows)
    }

    /// Kernel whose every row equals `pi`: the chain draws i.i.d. states.
    pub fn iid(pi: &[f64]) -> Result<Self, MarkovError> {
        validate_distribution(pi).map_err(|detail| MarkovError::BadParam {
            name: "iid".into(),
            detail,
        })?;
        let rows = vec![pi.to_vec(); pi.len()];
        Self::new(&format!("iid(k={})", pi.len()), rows)
    }
}

fn validate_distribution(p: &[f64]) -> Result<(), String> {
    if p.is_empty() {
        return Err("empty probability vector".into());
    }
    for (i, &v) in p.iter().enumerate() {
        if v < 0.0 {
            return Err(format!("entry {i} is negative: {v}"));
        }
    }
    let sum = NeumaierSum::total(p.iter().copied());
    if (sum - 1.0).abs() > 1e-9 {
        return Err(format!("entries sum to {sum}, not 1"));
    }
    Ok(())
}

/// Names accepted by [`kernel_library`].
pub const KERNEL_NAMES: [&str; 4] = ["two_state", "lazy_cycle", "dirichlet_random", "iid"];

/// Build a kernel from the bundled library by name.
///
/// Parameters (all values are strings, parsed per kernel):
/// - `two_state`: `a`, `b`
/// - `lazy_cycle`: `m`
/// - `dirichlet_random`: `n_states`, `seed`, optional `alpha` (default 1)
/// - `iid`: either `pi` (comma-separated probabilities) or `n_states` +
///   `seed` for a random Dirichlet(1,…,1) distribution
pub fn kernel_library(
    name: &str,
    params: &BTreeMap<String, String>,
) -> Result<TransitionKernel, MarkovError> {
    let get = |key: &str| -> Result<&str, MarkovError> {
        params
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| MarkovError::BadParam {
                name: name.to_string(),
                detail: format!("missing parameter {key:?}"),
            })
    };
    let parse_f64 = |key: &str| -> Result<f64, MarkovError> {
        get(key)?.parse::<f64>().map_err(|e| MarkovError::BadParam {
            name: name.to_string(),
            detail: format!("parameter {key:?}: {e}"),
        })
    };
    let parse_u64 = |key: &str| -> Result<u64, MarkovError> {
        get(key)?.parse::<u64>().map_err(|e| MarkovError::BadParam {
            name: name.to_string(),
            detail: format!("parameter {key:?}: {e}"),
        })
    };
    match name {
        "two_state" => TransitionKernel::two_state(parse_f64("a")?, parse_f64("b")?),
        "lazy_cycle" => TransitionKernel::lazy_cycle(parse_u64("m")? as usize),
        "dirichlet_random" => {
            let alpha = if params.contains_key("alpha") {
                parse_f64("alpha")?
            } else {
                1.0
            };
            TransitionKernel::dirichlet_random(parse_u64("n_states")? as usize, alpha, parse_u64("seed")?)
        }
        "iid" => {
            if params.contains_key("pi") {
                let pi: Result<Vec<f64>, _> = get("pi")?
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect();
                let pi = pi.map_err(|e| MarkovError::BadParam {
                    name: name.to_string(),
                    detail: format!("parameter \"pi\": {e}"),
                })?;
                TransitionKernel::iid(&pi)
            } else {
                let k = parse_u64("n_states")? as usize;
                let seed = parse_u64("seed")?;
                if k < 1 {
                    return Err(MarkovError::BadParam {
                        name: name.to_string(),
                        detail: "n_states must be at least 1".into(),
                    });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let gamma = Gamma::new(1.0, 1.0).unwrap();
                let mut pi: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
                let sum: f64 = pi.iter().sum();
                for v in pi.iter_mut() {
                    *v /= sum;
                }
                let total = NeumaierSum::total(pi.iter().copied());
                pi[0] += 1.0 - total;
                TransitionKernel::iid(&pi)
            }
        }
        _ => Err(MarkovError::UnknownKernelName {
            name: name.to_string(),
            available: KERNEL_NAMES.join(", "),
        }),
    }
}

/// A probability vector `π` with `πᵀP = πᵀ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryDistribution {
    probs: Vec<f64>,
}

impl StationaryDistribution {
    /// The probabilities.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `π(f) = Σ_z π(z) f(z)`.
    pub fn expect(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.probs.len());
        NeumaierSum::total(self.probs.iter().zip(values).map(|(p, v)| p * v))
    }

    /// Variance of `f` under `π`.
    pub fn variance(&self, values: &[f64]) -> f64 {
        let mean = self.expect(values);
        NeumaierSum::total(
            self.probs
                .iter()
                .zip(values)
                .map(|(p, v)| p * (v - mean) * (v - mean)),
        )
    }
}

/// Solve the balance equations `πᵀP = πᵀ`, `Σπ = 1` for the unique
/// stationary distribution.
///
/// One balance equation is replaced by the normalization row (the balance
/// system has a one-dimensional null space exactly when the stationary law
/// is unique); the refined solve is then validated against the residual
/// tolerance and clamped of sub-round-off negatives.
pub fn stationary(kernel: &TransitionKernel) -> Result<StationaryDistribution, MarkovError> {
    let n = kernel.n_states();
    // M = I − Pᵀ with the last row replaced by 1ᵀ; rhs = e_n.
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut v = if i == j { 1.0 } else { 0.0 };
            v -= kernel.rows[j * n + i]; // transpose
            m[i * n + j] = v;
        }
    }
    for j in 0..n {
        m[(n - 1) * n + j] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let pi = linalg::solve_refined(&m, n, &rhs).ok_or_else(|| MarkovError::NoUniqueStationary {
        detail: "balance equations are rank-deficient (multiple ergodic classes?)".into(),
    })?;

    let mut probs = pi;
    for p in probs.iter_mut() {
        if *p < 0.0 {
            if *p < -1e-12 {
                return Err(MarkovError::NoUniqueStationary {
                    detail: format!("solved distribution has a negative mass {p}"),
                });
            }
            *p = 0.0;
        }
    }
    let total = NeumaierSum::total(probs.iter().copied());
    for p in probs.iter_mut() {
        *p /= total;
    }

    // Validate ‖πᵀP − πᵀ‖_∞.
    let mut residual = 0.0_f64;
    for j in 0..n {
        let mut acc = NeumaierSum::new();
        for (i, &p) in probs.iter().enumerate() {
            acc.add(p * kernel.rows[i * n + j]);
        }
        residual = residual.max((acc.value() - probs[j]).abs());
    }
    if residual > tol::STATIONARY_RESIDUAL {
        return Err(MarkovError::NoUniqueStationary {
            detail: format!("stationarity residual {residual:e} exceeds {:e}", tol::STATIONARY_RESIDUAL),
        });
    }
    Ok(StationaryDistribution { probs })
}

/// Worst-pair total variation contraction of each kernel power up to the
/// certifying time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixingCertificate {
    /// Smallest `t` with `δ(P^t) ≤ 1/4`.
    pub t_mix: usize,
    /// `δ(P^t)` for `t = 1, …, t_mix`.
    pub contraction_profile: Vec<f64>,
}

/// Worst pair of rows in total variation: `max_{z,z'} ½ Σ_x |Q(z,x) − Q(z',x)|`.
fn max_pairwise_tv(q: &[f64], n: usize) -> f64 {
    let mut worst = 0.0_f64;
    for z in 0..n {
        for z2 in (z + 1)..n {
            let mut l1 = 0.0;
            for x in 0..n {
                l1 += (q[z * n + x] - q[z2 * n + x]).abs();
            }
            worst = worst.max(0.5 * l1);
        }
    }
    worst
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// Certify uniform mixing: find the smallest `t ≤ cap` with worst-pair TV of
/// `P^t` at most 1/4. `cap` defaults to `10 · n_states²`.
pub fn certify_mixing(
    kernel: &TransitionKernel,
    cap: Option<usize>,
) -> Result<MixingCertificate, MarkovError> {
    let n = kernel.n_states();
    let cap = cap.unwrap_or(10 * n * n).max(1);
    let mut power = kernel.rows.clone();
    let mut profile = Vec::new();
    let mut last = f64::INFINITY;
    for _t in 1..=cap {
        let delta = max_pairwise_tv(&power, n);
        profile.push(delta);
        last = delta;
        if delta <= 0.25 {
            return Ok(MixingCertificate {
                t_mix: profile.len(),
                contraction_profile: profile,
            });
        }
        power = mat_mul(&power, &kernel.rows, n);
    }
    Err(MixingCertificate::not_certified(cap, last))
}

impl MixingCertificate {
    fn not_certified(cap: usize, last: f64) -> MarkovError {
        MarkovError::MixingNotCertified { cap, last }
    }

    /// Geometric tail factor `(1/4)^{⌈k / t_mix⌉}` implied by the certificate.
    pub fn tail_factor(&self, k: usize) -> f64 {
        0.25_f64.powi(k.div_ceil(self.t_mix) as i32)
    }
}

/// A sampled trajectory `Z_0, …, Z_n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainPath {
    states: Vec<usize>,
    seed: u64,
    stream: u64,
    initial: Vec<f64>,
}

impl ChainPath {
    /// Number of steps `n` (the path holds `n + 1` states).
    pub fn n(&self) -> usize {
        self.states.len() - 1
    }

    /// The states `Z_0, …, Z_n`.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// Seed the path was drawn with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// RNG stream within the seed (replication index).
    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Initial distribution of `Z_0`.
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Evaluate a state function along the path: `X_ℓ = f(Z_ℓ)` for
    /// `ℓ = 1, …, n` (index 0 is excluded by convention).
    pub fn f_samples(&self, f: &[f64]) -> Vec<f64> {
        self.states[1..].iter().map(|&z| f[z]).collect()
    }
}

/// Draw `Z_0 ~ initial` and `n` transitions with a ChaCha generator seeded
/// from `seed` (stream 0). See [`sample_path_stream`] for replicated use.
pub fn sample_path(
    kernel: &TransitionKernel,
    initial: &[f64],
    n: usize,
    seed: u64,
) -> Result<ChainPath, MarkovError> {
    sample_path_stream(kernel, initial, n, seed, 0)
}

/// Same as [`sample_path`] but on an explicit RNG stream, so replication `r`
/// of an experiment can use `(seed, r)` independently of scheduling.
pub fn sample_path_stream(
    kernel: &TransitionKernel,
    initial: &[f64],
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<ChainPath, MarkovError> {
    validate_distribution(initial)
        .map_err(|detail| MarkovError::BadInitialDistribution { detail })?;
    let k = kernel.n_states();
    if initial.len() != k {
        return Err(MarkovError::BadInitialDistribution {
            detail: format!("length {} does not match {k} states", initial.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    // Cumulative rows for inverse-CDF stepping.
    let mut cum = vec![0.0; k * k];
    for z in 0..k {
        let mut acc = 0.0;
        for x in 0..k {
            acc += kernel.rows[z * k + x];
            cum[z * k + x] = acc;
        }
        cum[z * k + k - 1] = 1.0;
    }
    let mut cum0 = vec![0.0; k];
    let mut acc = 0.0;
    for (x, c) in cum0.iter_mut().enumerate() {
        acc += initial[x];
        *c = acc;
    }
    cum0[k - 1] = 1.0;

    let draw = |cdf: &[f64], u: f64| -> usize {
        match cdf.iter().position(|&c| u < c) {
            Some(x) => x,
            None => k - 1,
        }
    };

    let mut states = Vec::with_capacity(n + 1);
    let mut z = draw(&cum0, rng.random::<f64>());
    states.push(z);
    for _ in 0..n {
        let u: f64 = rng.random();
        z = draw(&cum[z * k..(z + 1) * k], u);
        states.push(z);
    }
    Ok(ChainPath {
        states,
        seed,
        stream,
        initial: initial.to_vec(),
    })
}
