//! Overlapped batch means (OBM) for uniformly ergodic Markov chains, taken
//! apart piece by piece.
//!
//! The OBM estimator of the asymptotic variance `σ²_∞(f)` of a chain average
//! `π_n(f) = (1/n) Σ_ℓ f(Z_ℓ)` is the scaled sum of squared sliding batch
//! means
//!
//! ```text
//! σ̂²_OBM = b_n/(n−b_n+1) · Σ_{t=0}^{n−b_n} ( π_{b_n,t}(f) − π_n(f) )² ,
//! ```
//!
//! where `π_{b_n,t}(f)` averages `f` over the window `Z_{t+1}, …, Z_{t+b_n}`.
//! This crate implements the estimator twice (directly, and as a banded
//! quadratic form `Σ_{ℓ,j} w(ℓ,j) f(Z_ℓ) f(Z_j)` plus rank-one corrections),
//! together with the exact pathwise ledger that splits the quadratic form
//! into a martingale part and fully enumerated remainder terms via the
//! Poisson equation `g − Pg = f`. Every identity is checkable to floating
//! round-off on any sampled path, and exactly (rational arithmetic) at desk
//! scale.
//!
//! # Modules
//!
//! - [`markov`] — finite-state transition kernels, stationary distributions,
//!   uniform-mixing certificates, seeded path sampling, and a small kernel
//!   library (`two_state`, `lazy_cycle`, `dirichlet_random`, `iid`).
//! - [`poisson`] — Poisson-equation solver `g − Pg = f`, the conditional
//!   variance `ĝ = Pg² − (Pg)²`, and three independent routes to `σ²_∞(f)`.
//! - [`weights`] — the OBM weight band `w(ℓ,j)` in closed form, its first and
//!   second difference families, the rank-one vectors `u`, `v`, and an exact
//!   rational mode.
//! - [`decomp`] — the quadratic form `U_n(f)` and its decomposition ledger:
//!   diagonal + off-diagonal martingale transforms, the three remainder
//!   sums, their re-summed representation, and all residuals.
//! - [`exact`] — the same ledger replayed in `BigRational` arithmetic with
//!   `f := g − Pg`, so identity residuals are exactly zero.
//! - [`estimator`] — the OBM estimator via the sliding-window definition and
//!   via the quadratic form, with the rank-one correction split out.
//! - [`lab`] — seeded Monte Carlo: replicated moment experiments, log–log
//!   rate fits with jackknife intervals, a weighted-sum moment inequality
//!   check, and sub-Gaussian moment bounds.
//! - [`suite`] — the end-to-end verification battery used by the `verify`
//!   subcommand and the acceptance tests.
//!
//! # Examples directory
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --example kernel_tour            # kernels, π, mixing certificates
//! cargo run --example poisson_triple_check   # three routes to σ²_∞(f)
//! cargo run --example weight_band            # closed-form band vs. BᵀB, differences
//! cargo run --example decomposition_ledger   # full pathwise ledger + residuals
//! cargo run --example exact_ledger           # rational arithmetic: residuals == 0
//! cargo run --example obm_equivalence        # direct vs. quadratic-form OBM
//! cargo run --example moment_sweep           # replicated moments, rate fit
//! cargo run --example rosenthal_check        # weighted-sum moment inequality
//! cargo run --example remainder_tracking     # remainder moments vs. their bounds
//! ```
//!
//! A thin CLI (`obmlab`) exposes the same operations as subcommands
//! (`kernel`, `poisson`, `weights`, `decompose`, `estimate`, `sweep`,
//! `verify`); see the README.
//!
//! # Conventions
//!
//! - Paths carry `Z_0, …, Z_n`; functional averages run over `Z_1, …, Z_n`.
//! - Weight tables are lower triangular, 1-based: `w(ℓ,j)` with
//!   `1 ≤ j ≤ ℓ ≤ n`, and `w ≡ 0` outside that range (so difference families
//!   are total).
//! - Total variation is half the L¹ distance; the mixing time `t_mix` is the
//!   smallest `t` with worst-pair TV of the `t`-step kernel ≤ 1/4.
//! - All Monte Carlo is seeded ChaCha; replication `r` of an experiment with
//!   base seed `s` uses stream `(s, r)`, so results are byte-identical for
//!   any worker count.

pub mod decomp;
pub mod estimator;
pub mod exact;
pub mod io;
pub mod lab;
pub mod markov;
pub mod poisson;
pub mod suite;
pub mod summation;
pub mod tol;
pub mod weights;

mod linalg;

pub use decomp::{
    decompose, increments, quadratic_form, quadratic_form_samples, theorem_terms,
    DecompositionLedger, MartingaleIncrements, TheoremTerms,
};
pub use estimator::{obm_direct, obm_quadratic, ObmEstimate};
pub use exact::{decompose_exact, rationalize, ExactLedger, RationalWeights};
pub use lab::{ExperimentSpec, MomentReport, RateFit};
pub use markov::{
    certify_mixing, kernel_library, sample_path, stationary, ChainPath, MixingCertificate,
    StationaryDistribution, TransitionKernel,
};
pub use poisson::{solve_poisson, CenteredFunction, PoissonSolution};
pub use summation::NeumaierSum;
pub use weights::{BatchGeometry, DeltaFamily, ObmWeights, WeightTable};
