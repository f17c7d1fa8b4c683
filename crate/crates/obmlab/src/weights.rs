//! The OBM weight band `w(ℓ,j)` and its difference families.
//!
//! Writing the batch-means sum of squares as a quadratic form
//! `Σ_{ℓ,j} w(ℓ,j) X_ℓ X_j` produces a banded, lower-triangular weight table
//! driven entirely by window overlap counts: with `N₁ = n − b + 1` windows
//! of length `b`,
//!
//! ```text
//! w(ℓ,ℓ) =     #{windows covering ℓ}        / (b·N₁)
//! w(ℓ,j) = 2 · #{windows covering ℓ and j}  / (b·N₁)    (j < ℓ)
//! ```
//!
//! and `w(ℓ,j) = 0` whenever `ℓ − j ≥ b`. The table is evaluated lazily from
//! this closed form (never materialized), is exact in integer arithmetic up
//! to the single division, and satisfies `Σ_ℓ w(ℓ,ℓ) = 1`.
//!
//! Out-of-range indices (`ℓ < 1`, `j < 1`, `ℓ > n`, `j > ℓ`) carry weight 0
//! by convention, which makes the difference families
//! `Δ^{(1,0)}, Δ^{(0,1)}, Δ^{(1,1)}, Δ^{(m)}` total functions — the
//! decomposition ledger sums them without boundary special-casing.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::summation::NeumaierSum;

/// Errors from geometry validation and checked table access.
#[derive(Debug, thiserror::Error)]
pub enum WeightError {
    /// Batch length must satisfy `1 ≤ b_n ≤ n`.
    #[error("invalid batch geometry: n = {n}, b_n = {b} (need 1 ≤ b_n ≤ n)")]
    GeometryInvalid { n: usize, b: usize },
    /// Checked access outside `1 ≤ j ≤ ℓ ≤ n` (or outside a family's domain).
    #[error("index (ℓ,j) = ({l},{j}) outside the valid range for n = {n}")]
    IndexOutOfRange { l: i64, j: i64, n: usize },
    /// An operation needs the regime `n ≥ 2 b_n`.
    #[error("regime violation: n = {n} < 2·b_n = {}", 2 * b)]
    RegimeViolation { n: usize, b: usize },
}

/// Serialized form of [`BatchGeometry`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GeometryFile {
    n: usize,
    b_n: usize,
}

/// Path length `n` and batch length `b_n`, validated `1 ≤ b_n ≤ n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(try_from = "GeometryFile")]
pub struct BatchGeometry {
    n: usize,
    b: usize,
}

impl TryFrom<GeometryFile> for BatchGeometry {
    type Error = WeightError;
    fn try_from(g: GeometryFile) -> Result<Self, WeightError> {
        BatchGeometry::new(g.n, g.b_n)
    }
}

impl Serialize for BatchGeometry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GeometryFile {
            n: self.n,
            b_n: self.b,
        }
        .serialize(s)
    }
}

impl BatchGeometry {
    /// Validate `1 ≤ b_n ≤ n`.
    pub fn new(n: usize, b: usize) -> Result<Self, WeightError> {
        if n == 0 || b == 0 || b > n {
            return Err(WeightError::GeometryInvalid { n, b });
        }
        Ok(Self { n, b })
    }

    /// Square-root batching rule: `b_n = ⌈√n⌉`.
    pub fn sqrt_rule(n: usize) -> Result<Self, WeightError> {
        let b = (n as f64).sqrt().ceil() as usize;
        Self::new(n, b.max(1))
    }

    /// Path length.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Batch length.
    pub fn b(&self) -> usize {
        self.b
    }

    /// Number of sliding windows `N₁ = n − b_n + 1`.
    pub fn windows(&self) -> usize {
        self.n - self.b + 1
    }

    /// Whether `n ≥ 2 b_n` (where the ramp/flat/ramp profile is complete).
    pub fn in_regime(&self) -> bool {
        self.n >= 2 * self.b
    }
}

/// A lower-triangular weight table, total over all integer indices
/// (zero outside `1 ≤ j ≤ ℓ ≤ n` and outside the band).
///
/// The difference families are provided as default methods so any table —
/// the OBM band or a dense test table — decomposes identically:
///
/// ```text
/// Δ^{(1,0)}(ℓ,j) = w(ℓ,j) − w(ℓ−1,j)
/// Δ^{(0,1)}(ℓ,j) = w(ℓ,j) − w(ℓ,j−1)
/// Δ^{(1,1)}(ℓ,j) = w(ℓ,j) − w(ℓ,j−1) − w(ℓ−1,j) + w(ℓ−1,j−1)
/// Δ^{(m)}(ℓ)     = w(ℓ,ℓ−1) + w(ℓ−1,ℓ−2) − w(ℓ,ℓ−2) − 2·w(ℓ−1,ℓ−1)
/// ```
pub trait WeightTable {
    /// Path length `n`.
    fn n(&self) -> usize;

    /// Smallest `B` such that `w(ℓ,j) = 0` whenever `ℓ − j ≥ B`; lets
    /// consumers iterate `j ≥ ℓ − B` instead of the full row.
    fn bandwidth(&self) -> usize;

    /// `w(ℓ,j)`, zero outside the lower triangle `1 ≤ j ≤ ℓ ≤ n`.
    fn w(&self, l: i64, j: i64) -> f64;

    /// First difference in `ℓ`.
    fn d10(&self, l: i64, j: i64) -> f64 {
        self.w(l, j) - self.w(l - 1, j)
    }

    /// First difference in `j`.
    fn d01(&self, l: i64, j: i64) -> f64 {
        self.w(l, j) - self.w(l, j - 1)
    }

    /// Mixed second difference.
    fn d11(&self, l: i64, j: i64) -> f64 {
        self.w(l, j) - self.w(l, j - 1) - self.w(l - 1, j) + self.w(l - 1, j - 1)
    }

    /// Diagonal bracket combination used by the near-diagonal remainder.
    fn dm(&self, l: i64) -> f64 {
        self.w(l, l - 1) + self.w(l - 1, l - 2) - self.w(l, l - 2) - 2.0 * self.w(l - 1, l - 1)
    }
}

/// Difference-family selector for [`ObmWeights::delta_coeff`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaFamily {
    /// `Δ^{(1,0)}`
    D10,
    /// `Δ^{(0,1)}`
    D01,
    /// `Δ^{(1,1)}` (needs `ℓ ≥ 2`)
    D11,
    /// `Δ^{(m)}` (diagonal only, needs `ℓ ≥ 2`)
    Dm,
}

/// The OBM band, evaluated lazily from overlap counts.
#[derive(Debug, Clone, Copy)]
pub struct ObmWeights {
    geom: BatchGeometry,
}

impl ObmWeights {
    /// Table for a validated geometry.
    pub fn new(geom: BatchGeometry) -> Self {
        Self { geom }
    }

    /// The geometry.
    pub fn geometry(&self) -> BatchGeometry {
        self.geom
    }

    /// Number of length-`b` windows containing both `j` and `ℓ` (`j ≤ ℓ`):
    /// window starts run over `[max(1, ℓ−b+1), min(N₁, j)]`.
    fn count(&self, l: i64, j: i64) -> i64 {
        let n = self.geom.n as i64;
        let b = self.geom.b as i64;
        let n1 = n - b + 1;
        if j < 1 || l < j || l > n {
            return 0;
        }
        let lo = 1.max(l - b + 1);
        let hi = n1.min(j);
        (hi - lo + 1).max(0)
    }

    /// Checked access per the public contract: requires `1 ≤ j ≤ ℓ ≤ n`.
    pub fn weight(&self, l: usize, j: usize) -> Result<f64, WeightError> {
        if l < 1 || j < 1 || j > l || l > self.geom.n {
            return Err(WeightError::IndexOutOfRange {
                l: l as i64,
                j: j as i64,
                n: self.geom.n,
            });
        }
        Ok(self.w(l as i64, j as i64))
    }

    /// Checked difference-family access. Domains: `1 ≤ j ≤ ℓ ≤ n` for all
    /// families, `ℓ ≥ 2` additionally for `D11`, and `j = ℓ, ℓ ≥ 2` for `Dm`.
    pub fn delta_coeff(&self, family: DeltaFamily, l: usize, j: usize) -> Result<f64, WeightError> {
        let out = WeightError::IndexOutOfRange {
            l: l as i64,
            j: j as i64,
            n: self.geom.n,
        };
        if l < 1 || j < 1 || j > l || l > self.geom.n {
            return Err(out);
        }
        let (li, ji) = (l as i64, j as i64);
        match family {
            DeltaFamily::D10 => Ok(self.d10(li, ji)),
            DeltaFamily::D01 => Ok(self.d01(li, ji)),
            DeltaFamily::D11 => {
                if l < 2 {
                    return Err(out);
                }
                Ok(self.d11(li, ji))
            }
            DeltaFamily::Dm => {
                if l < 2 || j != l {
                    return Err(out);
                }
                Ok(self.dm(li))
            }
        }
    }

    /// The rank-one correction vectors of the quadratic-form representation:
    /// `v = Bᵀ1/N₁` (so `v_ℓ = w(ℓ,ℓ)`) and `u = (1/n)1 − v`.
    pub fn uv_vectors(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.geom.n;
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for l in 1..=n {
            let vl = self.w(l as i64, l as i64);
            v.push(vl);
            u.push(1.0 / n as f64 - vl);
        }
        (u, v)
    }

    /// Closed form of `Σ_ℓ w(ℓ,ℓ)²` in the regime `n ≥ 2 b_n`:
    /// `[(b−1)(2b−1)/(3b) + (n−2b+2)] / N₁²`.
    pub fn diag_square_sum(&self) -> Result<f64, WeightError> {
        let (n, b) = (self.geom.n, self.geom.b);
        if !self.geom.in_regime() {
            return Err(WeightError::RegimeViolation { n, b });
        }
        let n1 = self.geom.windows() as f64;
        let bf = b as f64;
        let ramp = (bf - 1.0) * (2.0 * bf - 1.0) / (3.0 * bf);
        let flat = (n - 2 * b + 2) as f64;
        Ok((ramp + flat) / (n1 * n1))
    }

    /// The two near-diagonal edge magnitudes that control the martingale
    /// part of the remainder: `|w(ℓ,ℓ−1) − w(ℓ−1,ℓ−1) − w(ℓ,ℓ)|` and
    /// `|2w(ℓ,ℓ) − w(ℓ,ℓ−1)|`, for `2 ≤ ℓ ≤ n`.
    pub fn mart_edge_bounds(&self, l: usize) -> Result<(f64, f64), WeightError> {
        if l < 2 || l > self.geom.n {
            return Err(WeightError::IndexOutOfRange {
                l: l as i64,
                j: l as i64,
                n: self.geom.n,
            });
        }
        let li = l as i64;
        let first = (self.w(li, li - 1) - self.w(li - 1, li - 1) - self.w(li, li)).abs();
        let second = (2.0 * self.w(li, li) - self.w(li, li - 1)).abs();
        Ok((first, second))
    }

    /// Exact rational weight (total, like [`WeightTable::w`]).
    pub fn w_exact(&self, l: i64, j: i64) -> BigRational {
        if l < j {
            return BigRational::from(BigInt::from(0));
        }
        let c = self.count(l, j);
        let mult = if l == j { 1 } else { 2 };
        let den = (self.geom.b as i64) * (self.geom.windows() as i64);
        BigRational::new(BigInt::from(mult * c), BigInt::from(den))
    }

    /// Exact `Σ_ℓ w(ℓ,ℓ)` (equals 1 for every valid geometry).
    pub fn trace_exact(&self) -> BigRational {
        let mut acc = BigRational::from(BigInt::from(0));
        for l in 1..=self.geom.n as i64 {
            acc += self.w_exact(l, l);
        }
        acc
    }

    /// Float trace `Σ_ℓ w(ℓ,ℓ)` (compensated).
    pub fn trace(&self) -> f64 {
        NeumaierSum::total((1..=self.geom.n as i64).map(|l| self.w(l, l)))
    }
}

impl WeightTable for ObmWeights {
    fn n(&self) -> usize {
        self.geom.n
    }

    fn bandwidth(&self) -> usize {
        self.geom.b
    }

    fn w(&self, l: i64, j: i64) -> f64 {
        if j > l {
            return 0.0;
        }
        let c = self.count(l, j);
        if c == 0 {
            return 0.0;
        }
        let mult = if l == j { 1.0 } else { 2.0 };
        let den = (self.geom.b * self.geom.windows()) as f64;
        mult * c as f64 / den
    }
}

/// A dense lower-triangular table with arbitrary entries; the decomposition
/// identities hold for any such table, so tests exercise them well beyond
/// the OBM band (including negative weights).
#[derive(Debug, Clone)]
pub struct DenseWeights {
    n: usize,
    entries: Vec<f64>, // row-major lower triangle, (ℓ,j) ↦ ℓ(ℓ−1)/2 + j − 1
}

impl DenseWeights {
    /// Build from a function of `(ℓ, j)` with `1 ≤ j ≤ ℓ ≤ n`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(n * (n + 1) / 2);
        for l in 1..=n {
            for j in 1..=l {
                entries.push(f(l, j));
            }
        }
        Self { n, entries }
    }

    /// Materialize any other table (e.g. for oracle comparisons).
    pub fn from_table(t: &impl WeightTable) -> Self {
        Self::from_fn(t.n(), |l, j| t.w(l as i64, j as i64))
    }
}

impl WeightTable for DenseWeights {
    fn n(&self) -> usize {
        self.n
    }

    fn bandwidth(&self) -> usize {
        self.n
    }

    fn w(&self, l: i64, j: i64) -> f64 {
        if l < 1 || j < 1 || j > l || l > self.n as i64 {
            return 0.0;
        }
        let (l, j) = (l as usize, j as usize);
        self.entries[l * (l - 1) / 2 + j - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tol;
    use num_traits::One;

    fn table(n: usize, b: usize) -> ObmWeights {
        ObmWeights::new(BatchGeometry::new(n, b).unwrap())
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn frozen_values_for_n5_b2() {
        // Hand-computed: N₁ = 4, scale 1/(b·N₁) = 1/8.
        let w = table(5, 2);
        assert_close(w.weight(1, 1).unwrap(), 0.125, 1e-16);
        assert_close(w.weight(2, 2).unwrap(), 0.25, 1e-16);
        assert_close(w.weight(3, 3).unwrap(), 0.25, 1e-16);
        assert_close(w.weight(4, 4).unwrap(), 0.25, 1e-16);
        assert_close(w.weight(5, 5).unwrap(), 0.125, 1e-16);
        assert_close(w.weight(3, 2).unwrap(), 0.25, 1e-16);
        assert_eq!(w.weight(3, 1).unwrap(), 0.0); // outside the band
        assert_close(w.trace(), 1.0, 1e-16);
    }

    #[test]
    fn checked_access_rejects_bad_indices() {
        let w = table(5, 2);
        assert!(matches!(
            w.weight(0, 1),
            Err(WeightError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            w.weight(3, 4),
            Err(WeightError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            w.weight(6, 1),
            Err(WeightError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            w.delta_coeff(DeltaFamily::D11, 1, 1),
            Err(WeightError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            w.delta_coeff(DeltaFamily::Dm, 3, 2),
            Err(WeightError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn geometry_validation() {
        assert!(BatchGeometry::new(0, 1).is_err());
        assert!(BatchGeometry::new(4, 0).is_err());
        assert!(BatchGeometry::new(4, 5).is_err());
        let g = BatchGeometry::new(10, 3).unwrap();
        assert_eq!(g.windows(), 8);
        assert!(g.in_regime());
        assert!(!BatchGeometry::new(5, 3).unwrap().in_regime());
        assert_eq!(BatchGeometry::sqrt_rule(1024).unwrap().b(), 32);
        assert_eq!(BatchGeometry::sqrt_rule(1000).unwrap().b(), 32);
    }

    #[test]
    fn unit_batches_make_the_table_diagonal() {
        let w = table(7, 1);
        for l in 1..=7 {
            assert_close(w.weight(l, l).unwrap(), 1.0 / 7.0, 1e-16);
            for j in 1..l {
                assert_eq!(w.weight(l, j).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn single_window_geometry_is_uniform() {
        // b = n: one window, every pair covered once.
        let n = 6;
        let w = table(n, n);
        for l in 1..=n {
            assert_close(w.weight(l, l).unwrap(), 1.0 / n as f64, 1e-16);
            for j in 1..l {
                assert_close(w.weight(l, j).unwrap(), 2.0 / n as f64, 1e-16);
            }
        }
    }

    #[test]
    fn diagonal_matches_the_ramp_flat_ramp_profile() {
        for (n, b) in [(12, 3), (20, 7), (9, 4), (50, 25)] {
            let w = table(n, b);
            let n1 = (n - b + 1) as f64;
            let scale = 1.0 / (b as f64 * n1);
            for l in 1..=n {
                let expect = if l < b {
                    l as f64 * scale
                } else if l <= n - b + 1 {
                    1.0 / n1
                } else {
                    (n - l + 1) as f64 * scale
                };
                assert_close(w.weight(l, l).unwrap(), expect, 1e-15);
            }
        }
    }

    #[test]
    fn first_subdiagonal_matches_its_piecewise_form() {
        for (n, b) in [(12, 3), (20, 7), (30, 5)] {
            let w = table(n, b);
            let scale = 1.0 / ((b * (n - b + 1)) as f64);
            for l in 2..=n {
                let expect = if l < b {
                    2.0 * (l - 1) as f64 * scale
                } else if l <= n - b + 1 {
                    2.0 * (b - 1) as f64 * scale
                } else {
                    2.0 * (n - l + 1) as f64 * scale
                };
                assert_close(w.weight(l, l - 1).unwrap(), expect, 1e-15, );
            }
        }
    }

    #[test]
    fn trace_is_one_across_geometries() {
        for n in [1, 2, 3, 5, 17, 64, 257] {
            for b in [1, 2, n / 2, n] {
                if b == 0 || b > n {
                    continue;
                }
                let w = table(n, b);
                assert_close(w.trace(), 1.0, tol::TRACE_ONE);
                assert!(w.trace_exact().is_one(), "n={n} b={b}");
            }
        }
    }

    #[test]
    fn mixed_second_difference_lives_only_at_lag_b() {
        // Below the first subdiagonal, Δ^{(1,1)}(ℓ,j) vanishes except at
        // j = ℓ − b, where its magnitude is exactly 2/(b·N₁).
        for (n, b) in [(10, 4), (12, 3), (16, 1), (9, 4), (14, 7)] {
            let w = table(n, b);
            let spike = 2.0 / ((b * (n - b + 1)) as f64);
            for l in 2..=n {
                for j in 1..=l - 2 {
                    let d = w.delta_coeff(DeltaFamily::D11, l, j).unwrap();
                    if l as i64 - j as i64 == b as i64 {
                        assert_close(d.abs(), spike, 1e-15);
                    } else {
                        // Zero in exact arithmetic (see the rational tests);
                        // in floats the four-term stencil cancels to a few ulps.
                        assert!(d.abs() <= 1e-15, "n={n} b={b} l={l} j={j}: {d:e}");
                    }
                }
            }
        }
    }

    #[test]
    fn interior_edge_magnitudes_are_two_over_b_n1() {
        let (n, b) = (40, 5);
        let w = table(n, b);
        let expect = 2.0 / ((b * (n - b + 1)) as f64);
        for l in (b + 1)..=(n - b + 1) {
            let (first, second) = w.mart_edge_bounds(l).unwrap();
            assert_close(first, expect, 1e-15);
            assert_close(second, expect, 1e-15);
        }
        assert!(w.mart_edge_bounds(1).is_err());
    }

    #[test]
    fn diag_square_sum_closed_form_is_exact() {
        let w = table(5, 2);
        assert_close(w.diag_square_sum().unwrap(), 7.0 / 32.0, 1e-16);
        for (n, b) in [(5, 2), (12, 3), (64, 8), (100, 50), (17, 4)] {
            let w = table(n, b);
            let direct =
                NeumaierSum::total((1..=n as i64).map(|l| w.w(l, l) * w.w(l, l)));
            let closed = w.diag_square_sum().unwrap();
            assert_close(closed, direct, 1e-15);
            assert!(closed <= 1.0 / (n - b + 1) as f64 + 1e-15);
        }
        assert!(matches!(
            table(5, 3).diag_square_sum(),
            Err(WeightError::RegimeViolation { .. })
        ));
    }

    #[test]
    fn uv_vectors_split_the_mean_weights() {
        let w = table(5, 2);
        let (u, v) = w.uv_vectors();
        let expect_v = [0.125, 0.25, 0.25, 0.25, 0.125];
        for (i, &ev) in expect_v.iter().enumerate() {
            assert_close(v[i], ev, 1e-15);
            assert_close(u[i] + v[i], 0.2, 1e-15);
        }
        assert_close(NeumaierSum::total(v.iter().copied()), 1.0, 1e-15);
        assert_close(NeumaierSum::total(u.iter().copied()), 0.0, 1e-15);
    }

    #[test]
    fn v_telescoping_sum_is_two_over_n1_in_regime() {
        for (n, b) in [(16, 4), (100, 10), (64, 32), (33, 16)] {
            let w = table(n, b);
            let (_, v) = w.uv_vectors();
            let mut sum = v[0].abs() + v[n - 1].abs();
            for k in 0..(n - 1) {
                sum += (v[k + 1] - v[k]).abs();
            }
            assert_close(sum, 2.0 / (n - b + 1) as f64, 1e-14);
        }
    }

    #[test]
    fn exact_values_match_floats() {
        for (n, b) in [(5, 2), (9, 4), (16, 16), (13, 1)] {
            let w = table(n, b);
            for l in 1..=n as i64 {
                for j in 1..=l {
                    let exact = w.w_exact(l, j);
                    let approx = exact.numer().to_string().parse::<f64>().unwrap()
                        / exact.denom().to_string().parse::<f64>().unwrap();
                    assert_close(w.w(l, j), approx, 1e-15);
                }
            }
        }
    }

    #[test]
    fn out_of_range_weights_are_zero() {
        let w = table(5, 2);
        for (l, j) in [(0, 0), (-1, -3), (6, 1), (1, 6), (3, 0), (0, 3)] {
            assert_eq!(w.w(l, j), 0.0, "({l},{j})");
        }
        assert!(w.dm(2).is_finite()); // touches ℓ−2 = 0 without panicking
    }

    #[test]
    fn dense_tables_reproduce_the_band() {
        let w = table(8, 3);
        let dense = DenseWeights::from_table(&w);
        for l in 0..=9 {
            for j in 0..=9 {
                assert_eq!(dense.w(l, j), w.w(l, j), "({l},{j})");
                assert_eq!(dense.d11(l, j), w.d11(l, j));
            }
        }
    }
}
