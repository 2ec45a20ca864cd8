//! Multinomial occupancy law and windowed lattice enumeration.
//!
//! Drawing `n` i.i.d. cells uniformly from `m` equally likely cells gives
//! occupancy counts `(k_1, ..., k_m)` with probability
//! `m^-n * n! / (k_1! ... k_m!)`. Everything here works on the centered
//! lattice `j_i = k_i - n/m` (which requires `m | n`): probabilities, the
//! Gaussian surrogate `d_n * exp(-(m/2n) sum j^2)` and its Stirling-corrected
//! refinement, Chebyshev tail cutoffs, and truncated expectations of test
//! functions against the occupancy law.
//!
//! Enumeration runs over the box window `|j_i| <= floor(b sqrt n)` on the
//! first `m - 1` coordinates (clamped so every count stays in `[0, n]`), with
//! the last coordinate forced by `sum j_i = 0` and kept only when its count
//! is nonnegative. The fold is deterministic: worker threads own contiguous
//! chunks of the first coordinate and partial results merge in chunk order.

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::summation::KahanSum;
use crate::ExecConfig;
use std::f64::consts::PI;

/// Cumulative table of `ln k!`, built once and shared across a fold.
///
/// Entries are stored as unevaluated head/compensation pairs. A log-pmf is a
/// difference of entries of magnitude `~n ln n` that collapses to a value of
/// order one, and at `n = 10^4` half an ulp of a single rounded entry is
/// already `7e-12` — visible in window sums pinned at `1e-12`. Combining the
/// pairs first and rounding once keeps the result at ulps of itself.
#[derive(Debug, Clone)]
pub struct LnFactorial {
    table: Vec<(f64, f64)>,
}

impl LnFactorial {
    /// Builds the table for arguments `0..=max`.
    pub fn new(max: u64) -> Self {
        let mut table = Vec::with_capacity(max as usize + 1);
        let mut acc = KahanSum::new();
        table.push(acc.parts());
        for k in 1..=max {
            acc.add((k as f64).ln());
            table.push(acc.parts());
        }
        LnFactorial { table }
    }

    /// `ln k!`; `k` must be within the table built by [`LnFactorial::new`].
    pub fn get(&self, k: u64) -> f64 {
        let (sum, comp) = self.table[k as usize];
        sum + comp
    }

    /// `ln k!` as its stored head/compensation pair, for cancellation-safe
    /// differencing; feed both halves to a [`KahanSum`].
    pub fn get_parts(&self, k: u64) -> (f64, f64) {
        self.table[k as usize]
    }

    /// Largest argument the table covers.
    pub fn max(&self) -> u64 {
        self.table.len() as u64 - 1
    }
}

/// Head and tail of a two-word `ln 2`: the rounded constant and the rounded
/// remainder, together accurate to ~1e-33.
const LN2_HEAD: f64 = std::f64::consts::LN_2;
const LN2_TAIL: f64 = 2.3190468138462996e-17;

/// Adds `a * b` to the accumulator with its exact rounding residual, via a
/// fused multiply-add.
#[inline]
fn add_product(acc: &mut KahanSum, a: f64, b: f64) {
    let p = a * b;
    acc.add(p);
    acc.add(a.mul_add(b, -p));
}

/// Base term `ln n! - n ln m` of the occupancy log-pmf, as a compensated
/// accumulator ready for per-cell subtractions.
///
/// `n ln m` needs care: half an ulp of the rounded `ln m` constant alone is
/// worth `2.3e-13` after multiplying by `n = 10^4`, so the power-of-two part
/// of `m` goes through the two-word `ln 2` and every product carries its
/// fused-multiply-add residual. Only an odd factor of `m` keeps a single
/// constant rounding.
pub(crate) fn log_pmf_base(table: &LnFactorial, n: u64, m: usize) -> KahanSum {
    let mut acc = KahanSum::from_parts(table.get_parts(n));
    let nf = n as f64;
    let twos = m.trailing_zeros();
    let odd = (m >> twos) as f64;
    // Exact: building the table already caps n far below 2^53 / 64.
    let nt = nf * twos as f64;
    add_product(&mut acc, -nt, LN2_HEAD);
    acc.add(-nt * LN2_TAIL);
    if odd > 1.0 {
        add_product(&mut acc, -nf, odd.ln());
    }
    acc
}

/// Subtracts the table entries for `counts` from the base accumulator and
/// collapses to the log-probability.
#[inline]
pub(crate) fn finish_log_pmf(table: &LnFactorial, base: KahanSum, counts: &[u64]) -> f64 {
    let mut acc = base;
    for &k in counts {
        let (sum, comp) = table.get_parts(k);
        acc.add(-sum);
        acc.add(-comp);
    }
    acc.value()
}

/// Log-probability of occupancy counts under the uniform multinomial law.
pub fn multinomial_log_pmf(table: &LnFactorial, n: u64, counts: &[u64]) -> Result<f64> {
    if counts.len() < 2 {
        return Err(Error::domain("need at least two cells".to_string()));
    }
    let total: u64 = counts.iter().sum();
    if total != n {
        return Err(Error::domain(format!(
            "occupancy counts sum to {total}, expected {n}"
        )));
    }
    if n > table.max() {
        return Err(Error::domain(format!(
            "factorial table covers 0..={}, got n = {n}",
            table.max()
        )));
    }
    Ok(finish_log_pmf(table, log_pmf_base(table, n, counts.len()), counts))
}

/// Chebyshev tail cutoff for a mass budget `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailCutoff {
    /// `1 / sqrt(epsilon)`: the point where the Chebyshev bound equals the
    /// budget.
    pub real: f64,
    /// Smallest integer `b` with `1/b^2` strictly below the budget.
    pub integer: u64,
}

/// Smallest window parameter whose Chebyshev tail bound `1/b^2` undercuts
/// `epsilon`.
pub fn tail_cutoff(epsilon: f64) -> Result<TailCutoff> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::domain(format!(
            "tail budget must be positive and finite, got {epsilon}"
        )));
    }
    let real = epsilon.sqrt().recip();
    let mut b = (real.floor() as u64).max(1).saturating_sub(1).max(1);
    while (b * b) as f64 * epsilon <= 1.0 {
        b += 1;
    }
    Ok(TailCutoff { real, integer: b })
}

/// A centered-lattice box window for `n` draws into `m` cells.
///
/// Free coordinates `j_1..j_{m-1}` range over `[lo, hi]`; the last coordinate
/// is `-sum j_i` and a point is kept only if its occupancy count is
/// nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeWindow {
    n: u64,
    m: usize,
    per_cell: u64,
    halfwidth: u64,
    lo: i64,
    hi: i64,
}

impl LatticeWindow {
    /// Builds the window `|j_i| <= floor(b sqrt n)`, clamped to counts in
    /// `[0, n]`. Requires `m >= 2` and `m | n`.
    pub fn new(n: u64, m: usize, b: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::domain(format!("need at least two cells, got m = {m}")));
        }
        if n == 0 {
            return Err(Error::domain("need at least one draw".to_string()));
        }
        if n % m as u64 != 0 {
            return Err(Error::domain(format!(
                "cell count {m} must divide the number of draws {n} for centering"
            )));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::domain(format!(
                "window parameter must be positive and finite, got {b}"
            )));
        }
        let hw_real = b * (n as f64).sqrt();
        if hw_real >= 9.0e15 {
            return Err(Error::domain(format!(
                "window halfwidth {hw_real} too large to index"
            )));
        }
        let halfwidth = hw_real.floor() as u64;
        let per_cell = n / m as u64;
        let lo = -(halfwidth.min(per_cell) as i64);
        let hi = halfwidth.min(n - per_cell) as i64;
        Ok(LatticeWindow { n, m, per_cell, halfwidth, lo, hi })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Count in every cell at the lattice center, `n / m`.
    pub fn per_cell(&self) -> u64 {
        self.per_cell
    }

    /// `floor(b sqrt n)` before clamping.
    pub fn halfwidth(&self) -> u64 {
        self.halfwidth
    }

    /// Inclusive range of each free coordinate after clamping.
    pub fn free_range(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    /// Upper bound on enumerated points: the full box over free coordinates.
    pub fn box_points(&self) -> u128 {
        let width = (self.hi - self.lo + 1) as u128;
        let mut total: u128 = 1;
        for _ in 0..self.m - 1 {
            total = total.saturating_mul(width);
        }
        total
    }
}

/// Visitor state for a windowed lattice fold.
///
/// `observe` sees each lattice point exactly once; `merge` combines a chunk
/// result into the running total and is always called in ascending chunk
/// order, which keeps folds reproducible for a fixed thread count.
pub trait WindowAccumulator: Send {
    fn observe(&mut self, j: &[i64], counts: &[u64]);
    fn merge(&mut self, other: Self);
}

/// Enumerates the window with the first free coordinate restricted to
/// `[first_lo, first_hi]`, feeding every admissible point to `acc`.
/// Returns the number of points visited.
fn fold_chunk<A: WindowAccumulator>(
    win: &LatticeWindow,
    first_lo: i64,
    first_hi: i64,
    acc: &mut A,
) -> u64 {
    if first_lo > first_hi {
        return 0;
    }
    let free = win.m - 1;
    let mut j = vec![win.lo; free];
    j[0] = first_lo;
    let mut full = vec![0i64; win.m];
    let mut counts = vec![0u64; win.m];
    let floor_last = -(win.per_cell as i64);
    let mut visited = 0u64;
    loop {
        let s: i64 = j.iter().sum();
        let j_last = -s;
        if j_last >= floor_last {
            full[..free].copy_from_slice(&j);
            full[free] = j_last;
            for (c, &ji) in counts.iter_mut().zip(full.iter()) {
                *c = (win.per_cell as i64 + ji) as u64;
            }
            acc.observe(&full, &counts);
            visited += 1;
        }
        // Odometer step, last coordinate fastest.
        let mut idx = free;
        loop {
            if idx == 0 {
                return visited;
            }
            idx -= 1;
            j[idx] += 1;
            let cap = if idx == 0 { first_hi } else { win.hi };
            if j[idx] <= cap {
                break;
            }
            j[idx] = win.lo;
        }
    }
}

/// Folds an accumulator over every admissible point of the window.
///
/// The candidate box is checked against `cfg.lattice_budget` before any work
/// happens. With `cfg.threads > 1` the first coordinate is split into
/// contiguous chunks; partials merge in chunk order. Returns the accumulator
/// and the number of points actually visited.
pub fn fold_window<A, F>(win: &LatticeWindow, cfg: &ExecConfig, make: F) -> Result<(A, u64)>
where
    A: WindowAccumulator,
    F: Fn() -> A + Sync,
{
    if win.box_points() > cfg.lattice_budget as u128 {
        return Err(Error::budget(format!(
            "window box holds up to {} lattice points, budget allows {}",
            win.box_points(),
            cfg.lattice_budget
        )));
    }
    let threads = cfg.threads.max(1);
    let width = (win.hi - win.lo + 1) as u64;
    if threads == 1 || width <= 1 {
        let mut acc = make();
        let visited = fold_chunk(win, win.lo, win.hi, &mut acc);
        return Ok((acc, visited));
    }
    let chunk = width.div_ceil(threads as u64) as i64;
    let mut partials: Vec<Option<(A, u64)>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        let mut lo = win.lo;
        while lo <= win.hi {
            let hi = (lo + chunk - 1).min(win.hi);
            let make_ref = &make;
            handles.push(scope.spawn(move || {
                let mut acc = make_ref();
                let visited = fold_chunk(win, lo, hi, &mut acc);
                (acc, visited)
            }));
            lo = hi + 1;
        }
        for h in handles {
            partials.push(Some(h.join().expect("lattice worker panicked")));
        }
    });
    let mut iter = partials.into_iter().flatten();
    let (mut acc, mut visited) = iter.next().expect("at least one chunk");
    for (other, v) in iter {
        acc.merge(other);
        visited += v;
    }
    Ok((acc, visited))
}

struct CountAccumulator;

impl WindowAccumulator for CountAccumulator {
    fn observe(&mut self, _j: &[i64], _counts: &[u64]) {}
    fn merge(&mut self, _other: Self) {}
}

/// Number of admissible lattice points in the window.
pub fn window_count(win: &LatticeWindow, cfg: &ExecConfig) -> Result<u64> {
    let (_, visited) = fold_window(win, cfg, || CountAccumulator)?;
    Ok(visited)
}

/// `ln` of the prefactor `d_n = sqrt(m) * (m / (2 pi n))^((m-1)/2)` shared by
/// both lattice surrogates.
fn log_prefactor(n: u64, m: usize) -> f64 {
    let mf = m as f64;
    0.5 * mf.ln() + 0.5 * (mf - 1.0) * (mf / (2.0 * PI * n as f64)).ln()
}

/// `ln` of the Gaussian lattice surrogate `d_n * exp(-(m/2n) sum j^2)`.
pub fn log_gaussian_surrogate(n: u64, m: usize, j: &[i64]) -> f64 {
    let nf = n as f64;
    let mf = m as f64;
    let s2: i128 = j.iter().map(|&x| (x as i128) * (x as i128)).sum();
    log_prefactor(n, m) - (mf / (2.0 * nf)) * s2 as f64
}

/// `ln` of the Stirling-corrected surrogate `d_n * exp(H(n, j))`, where the
/// exponent polynomial `H` carries the Gaussian quadratic together with its
/// next-order quadratic, cubic, and quartic refinements.
pub fn log_stirling_approx(n: u64, m: usize, j: &[i64]) -> f64 {
    let nf = n as f64;
    let mf = m as f64;
    let mut s2: i128 = 0;
    let mut s3: i128 = 0;
    let mut s4: i128 = 0;
    for &x in j {
        let x = x as i128;
        let x2 = x * x;
        s2 += x2;
        s3 += x2 * x;
        s4 += x2 * x2;
    }
    let h = (mf * mf / (4.0 * nf * nf) - mf / (2.0 * nf)) * s2 as f64
        + (mf * mf / (6.0 * nf * nf) - mf * mf * mf / (6.0 * nf * nf * nf)) * s3 as f64
        - (mf * mf * mf / (3.0 * nf * nf * nf)) * s4 as f64;
    log_prefactor(n, m) + h
}

/// A truncated expectation against the multinomial occupancy law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedExpectation {
    /// Sum of `pmf * f(sum o_i j_i / sqrt n)` over the window.
    pub value: f64,
    /// Probability mass the window captures.
    pub window_mass: f64,
    /// Lattice points enumerated.
    pub lattice_points: u64,
}

struct ExpectationAcc<'a> {
    table: &'a LnFactorial,
    outcomes: &'a [f64],
    f: &'a TestFunction,
    log_base: KahanSum,
    inv_sqrt_n: f64,
    mass: KahanSum,
    value: KahanSum,
}

impl WindowAccumulator for ExpectationAcc<'_> {
    fn observe(&mut self, j: &[i64], counts: &[u64]) {
        let p = finish_log_pmf(self.table, self.log_base, counts).exp();
        let mut dot = 0.0;
        for (&o, &ji) in self.outcomes.iter().zip(j.iter()) {
            dot += o * ji as f64;
        }
        self.mass.add(p);
        self.value.add(p * self.f.eval(dot * self.inv_sqrt_n));
    }

    fn merge(&mut self, other: Self) {
        self.mass.merge(&other.mass);
        self.value.merge(&other.value);
    }
}

/// Expectation of `f(sum o_i (k_i - n/m) / sqrt n)` under the occupancy law,
/// truncated to the window `|j_i| <= floor(b sqrt n)`.
///
/// `outcomes` supplies one value per cell (`m = outcomes.len()`).
pub fn expectation_truncated(
    outcomes: &[f64],
    n: u64,
    b: f64,
    f: &TestFunction,
    cfg: &ExecConfig,
) -> Result<TruncatedExpectation> {
    let m = outcomes.len();
    let win = LatticeWindow::new(n, m, b)?;
    let table = LnFactorial::new(n);
    let log_base = log_pmf_base(&table, n, m);
    let inv_sqrt_n = (n as f64).sqrt().recip();
    let make = || ExpectationAcc {
        table: &table,
        outcomes,
        f,
        log_base,
        inv_sqrt_n,
        mass: KahanSum::new(),
        value: KahanSum::new(),
    };
    let (acc, visited) = fold_window(&win, cfg, make)?;
    Ok(TruncatedExpectation {
        value: acc.value.value(),
        window_mass: acc.mass.value(),
        lattice_points: visited,
    })
}
