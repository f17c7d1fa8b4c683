//! The OBM weight band in closed form: unit trace, bandwidth, the diagonal
//! square sum, the difference families, and agreement with the explicit
//! batch-matrix construction.
//!
//! ```text
//! cargo run --example weight_band
//! ```

use num_traits::One;
use obmlab::weights::{BatchGeometry, DeltaFamily, ObmWeights, WeightTable};

fn main() {
    let (n, b) = (10usize, 3usize);
    let geom = BatchGeometry::new(n, b).unwrap();
    let w = ObmWeights::new(geom);

    println!("geometry: n = {n}, b = {b}, N₁ = {} windows", geom.windows());
    println!("bandwidth = {} (w(ℓ,j) = 0 once ℓ−j ≥ b)\n", w.bandwidth());

    // The band, row by row.
    println!("w(ℓ,j)·b·N₁ (integer counts; diagonal single, below-diagonal doubled):");
    let scale = (b * geom.windows()) as f64;
    for l in 1..=n as i64 {
        let row: Vec<String> = (1..=l)
            .map(|j| format!("{:>3.0}", w.w(l, j) * scale))
            .collect();
        println!("  ℓ={l:>2}: {}", row.join(" "));
    }

    // Unit trace, float and exact.
    println!("\ntrace  Σ_ℓ w(ℓ,ℓ) = {:.17}  (exact: {})", w.trace(), w.trace_exact());
    assert!(w.trace_exact().is_one());

    // Diagonal square sum: closed form vs direct.
    let direct: f64 = (1..=n as i64).map(|l| w.w(l, l).powi(2)).sum();
    let closed = w.diag_square_sum().unwrap();
    println!("Σ_ℓ w(ℓ,ℓ)²      = {closed:.17} (direct {direct:.17})");

    // The mixed second difference is a single spike at lag b.
    println!("\nΔ^(1,1)(ℓ,j) for j ≤ ℓ−2 (·b·N₁; nonzero only at j = ℓ−b, value −2):");
    for l in 2..=n {
        let row: Vec<String> = (1..=l.saturating_sub(2))
            .map(|j| {
                let d = w.delta_coeff(DeltaFamily::D11, l, j).unwrap() * scale;
                if d.abs() < 1e-9 {
                    "  .".to_string()
                } else {
                    format!("{d:>3.0}")
                }
            })
            .collect();
        if !row.is_empty() {
            println!("  ℓ={l:>2}: {}", row.join(" "));
        }
    }

    // Cross-check every entry against the defining batch matrix B
    // (N₁ × n, rows = sliding windows of 1/b), unfolded into totals.
    let n1 = geom.windows();
    let mut worst = 0.0f64;
    for l in 1..=n {
        for j in 1..=l {
            let mut dot = 0.0;
            for t in 1..=n1 {
                let hit = |c: usize| c >= t && c < t + b;
                if hit(l) && hit(j) {
                    dot += 1.0 / (b * b) as f64;
                }
            }
            let mult = if l == j { 1.0 } else { 2.0 };
            let brute = mult * (b as f64 / n1 as f64) * dot;
            worst = worst.max((w.w(l as i64, j as i64) - brute).abs());
        }
    }
    println!("\nmax |band − (b/N₁)·BᵀB unfold| over all entries = {worst:.2e}");
    assert!(worst <= 1e-13);

    // Edge magnitudes controlling the martingale part of the remainder.
    let worst_edge = (2..=n)
        .map(|l| {
            let (f, s) = w.mart_edge_bounds(l).unwrap();
            f.max(s)
        })
        .fold(0.0f64, f64::max);
    println!("max near-diagonal edge magnitude = {worst_edge:.4} (≤ 4/n = {:.4})", 4.0 / n as f64);
    assert!(worst_edge <= 4.0 / n as f64);
}
