//! Centralized numerical tolerances.
//!
//! Every threshold the crate asserts against lives here with a short
//! justification, so tests and library code agree on what "equal" means.

/// Row sums of a stochastic matrix must match 1 to this absolute tolerance.
/// Kernel files are human- or tool-written decimal JSON; 1e-12 admits decimal
/// rounding of well-formed rows while rejecting genuinely broken ones.
pub const ROW_SUM: f64 = 1e-12;

/// Stationarity residual `‖πᵀP − πᵀ‖_∞` after the refined linear solve.
pub const STATIONARY_RESIDUAL: f64 = 1e-10;

/// Pointwise residual `‖g − Pg − f‖_∞` of the Poisson solve.
pub const POISSON_RESIDUAL: f64 = 1e-10;

/// Relative disagreement allowed between independent routes to `σ²_∞(f)`.
pub const SIGMA2_AGREEMENT: f64 = 1e-8;

/// Weight-band equality against the brute-force `BᵀB` oracle (absolute;
/// band entries are O(1/(n−b+1)) so this is far below any entry scale).
pub const WEIGHT_ABS: f64 = 1e-13;

/// Trace of the diagonal weights must equal 1 to this absolute tolerance.
pub const TRACE_ONE: f64 = 1e-12;

/// Pathwise decomposition residuals, relative to `1 + |U_n|` (or `1 + |R̄_n|`
/// for the re-summed representation).
pub const LEDGER_RESIDUAL: f64 = 1e-9;

/// Relative gap allowed between the sliding-window and quadratic-form OBM
/// values on the same path.
pub const OBM_EQUIVALENCE: f64 = 1e-10;

/// Internal split checks (e.g. `D₁ = D₁,₁ + D₁,₂`) computed from the same
/// series in a different order.
pub const SPLIT_CHECK: f64 = 1e-10;

/// Default truncation tolerance for the autocovariance series tail.
pub const ACOV_TAIL: f64 = 1e-12;

// Identity-level checks must be stricter than statistical ones; enforced at
// compile time.
const _: () = {
    assert!(WEIGHT_ABS < LEDGER_RESIDUAL);
    assert!(TRACE_ONE < SIGMA2_AGREEMENT);
    assert!(OBM_EQUIVALENCE < SIGMA2_AGREEMENT);
    assert!(POISSON_RESIDUAL <= STATIONARY_RESIDUAL);
};
