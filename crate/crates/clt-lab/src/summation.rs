//! Compensated floating-point accumulation.
//!
//! Every long reduction in the crate (lattice sums, coefficient energies,
//! Monte Carlo means) runs through [`KahanSum`] so results are reproducible in
//! a fixed summation order and the rounding error stays at a few ulps of the
//! running total instead of growing with the term count. The variant
//! implemented is Neumaier's: it also compensates when a new term is larger
//! than the running sum.

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one term.
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
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    /// Running head and compensation, unevaluated.
    ///
    /// Storing this pair instead of [`KahanSum::value`] keeps the accuracy the
    /// compensation carries: a later difference of two large stored totals can
    /// then come out accurate to ulps of the small result, where a single
    /// rounded f64 per total would cap it at half an ulp of the totals
    /// themselves.
    pub fn parts(&self) -> (f64, f64) {
        (self.sum, self.compensation)
    }

    /// Rebuilds an accumulator from a stored [`KahanSum::parts`] pair.
    pub fn from_parts((sum, compensation): (f64, f64)) -> Self {
        KahanSum { sum, compensation }
    }

    /// Folds another accumulator into this one, carrying its compensation.
    ///
    /// Partial sums from a fixed partition must be merged in partition order
    /// for bit-reproducible results.
    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    /// Sums an iterator of terms in its order.
    pub fn sum_iter<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
        let mut acc = KahanSum::new();
        for v in iter {
            acc.add(v);
        }
        acc.value()
    }
}
