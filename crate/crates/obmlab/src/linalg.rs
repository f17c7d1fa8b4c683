//! Minimal dense linear algebra for desk-scale state spaces.
//!
//! The stationary-distribution and Poisson solves need one LU factorization
//! of an `n_states × n_states` matrix; a hand-rolled partial-pivoting solver
//! with one iterative-refinement pass keeps the crate free of heavyweight
//! numerical dependencies and the residuals near machine precision.

/// Row-major dense matrix–vector product.
pub(crate) fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(x.len(), n);
    let mut y = vec![0.0; n];
    for (i, yi) in y.iter_mut().enumerate() {
        let row = &a[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for (aij, xj) in row.iter().zip(x) {
            acc += aij * xj;
        }
        *yi = acc;
    }
    y
}

/// LU factorization with partial pivoting, stored in place.
pub(crate) struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

/// Factor a row-major `n × n` matrix. Returns `None` when a pivot column is
/// numerically zero relative to the matrix scale (rank deficiency).
pub(crate) fn lu_factor(a: &[f64], n: usize) -> Option<LuFactors> {
    assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let mut lu = a.to_vec();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[k * n + k].abs();
        for i in (k + 1)..n {
            let v = lu[i * n + k].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best <= 1e-13 * scale {
            return None;
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            piv.swap(k, p);
        }
        let pivot = lu[k * n + k];
        for i in (k + 1)..n {
            let m = lu[i * n + k] / pivot;
            lu[i * n + k] = m;
            for j in (k + 1)..n {
                lu[i * n + j] -= m * lu[k * n + j];
            }
        }
    }
    Some(LuFactors { n, lu, piv })
}

impl LuFactors {
    /// Solve `A x = b` using the stored factors.
    #[allow(clippy::needless_range_loop)] // triangular index ranges read best bare
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        // Forward substitution (unit lower triangle).
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }
}

/// Solve `A x = b` with one iterative-refinement pass. Returns `None` when
/// the matrix is numerically singular.
pub(crate) fn solve_refined(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    let factors = lu_factor(a, n)?;
    let mut x = factors.solve(b);
    // One refinement step: r = b − A x, x ← x + A⁻¹ r.
    let ax = mat_vec(a, n, &x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    let dx = factors.solve(&r);
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    Some(x)
}
