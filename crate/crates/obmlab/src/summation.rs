//! Compensated (Neumaier) summation.
//!
//! The decomposition ledger adds O(n·b_n) signed terms whose exact total is
//! often many orders of magnitude below the individual summands; a running
//! compensation keeps the accumulated rounding at O(ε) instead of O(nε).

/// Neumaier's variant of Kahan summation: like Kahan, but the compensation
/// also captures the case where the incoming term is larger than the running
/// sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    /// Start an empty sum.
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one term.
    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Current compensated total.
    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    /// Compensated sum of an iterator.
    pub fn total<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc.value()
    }
}
