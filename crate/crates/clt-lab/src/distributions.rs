//! Source distributions and their quantile representations.
//!
//! Everything downstream works with a distribution through its quantile
//! function on (0,1): evaluating it at uniform draws reproduces the law, and
//! the Haar machinery integrates it directly. Four families are built in:
//!
//! * `TwoPoint` — the symmetric two-point law on {-1, +1};
//! * `Uniform` — uniform on [-sqrt(3), sqrt(3)];
//! * `Normal` — the standard normal;
//! * `Discrete` — a finite table of `probability value` pairs.
//!
//! All families are normalized to mean 0 and variance 1; discrete tables are
//! validated for that at construction.
//!
//! The module also owns the diagonal enumeration of an infinite bit matrix
//! ([`bit_position`]) and the digit-subsequence projections built on it
//! ([`project_uniform`]): column `i` of the matrix reads a disjoint
//! subsequence of the binary digits of one uniform variate, producing
//! independent uniforms from a single seed value.

use crate::error::{Error, Result};
use crate::summation::KahanSum;
use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_1_SQRT_2;

/// Bisection tolerance for the normal quantile: reproducible across platforms
/// and independent of any closed-form inverse-CDF approximation.
const NORMAL_QUANTILE_TOL: f64 = 1e-12;

/// Probabilities of a discrete table must sum to 1 within this.
const TABLE_MASS_TOL: f64 = 1e-12;
/// Discrete tables must be centered within this.
const TABLE_MEAN_TOL: f64 = 1e-12;
/// Discrete tables must have unit variance within this.
const TABLE_VAR_TOL: f64 = 1e-10;

/// A validated finite discrete distribution with mean 0 and variance 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTable {
    values: Vec<f64>,
    probs: Vec<f64>,
    /// cumulative[i] = probs[0] + ... + probs[i]; last entry ~ 1.
    cumulative: Vec<f64>,
}

impl DiscreteTable {
    /// Builds a table from `(probability, value)` pairs, sorting by value.
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::domain("discrete table is empty"));
        }
        let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
        for &(p, v) in &sorted {
            if !p.is_finite() || !v.is_finite() {
                return Err(Error::domain("discrete table entries must be finite"));
            }
            if p <= 0.0 {
                return Err(Error::domain(format!(
                    "discrete table probability {p} is not positive"
                )));
            }
        }
        sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite values"));
        for w in sorted.windows(2) {
            if w[0].1 == w[1].1 {
                return Err(Error::domain(format!(
                    "discrete table value {} appears twice",
                    w[0].1
                )));
            }
        }
        let probs: Vec<f64> = sorted.iter().map(|&(p, _)| p).collect();
        let values: Vec<f64> = sorted.iter().map(|&(_, v)| v).collect();

        let mut cumulative = Vec::with_capacity(probs.len());
        let mut running = KahanSum::new();
        for &p in &probs {
            running.add(p);
            cumulative.push(running.value());
        }
        let mass = *cumulative.last().expect("nonempty");
        if (mass - 1.0).abs() > TABLE_MASS_TOL {
            return Err(Error::domain(format!(
                "discrete table probabilities sum to {mass}, not 1 (tolerance {TABLE_MASS_TOL:e})"
            )));
        }
        let mut mean = KahanSum::new();
        for (&p, &v) in probs.iter().zip(&values) {
            mean.add(p * v);
        }
        let mean = mean.value();
        if mean.abs() > TABLE_MEAN_TOL {
            return Err(Error::domain(format!(
                "discrete table mean is {mean:e}, not 0 (tolerance {TABLE_MEAN_TOL:e})"
            )));
        }
        let mut var = KahanSum::new();
        for (&p, &v) in probs.iter().zip(&values) {
            let d = v - mean;
            var.add(p * d * d);
        }
        let var = var.value();
        if (var - 1.0).abs() > TABLE_VAR_TOL {
            return Err(Error::domain(format!(
                "discrete table variance is {var}, not 1 (tolerance {TABLE_VAR_TOL:e})"
            )));
        }
        Ok(DiscreteTable { values, probs, cumulative })
    }

    /// Parses the text form: one `probability value` pair per line, blank
    /// lines and `#` comments ignored.
    pub fn from_table_str(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(p), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::domain(format!(
                    "table line {}: expected `probability value`, got {line:?}",
                    lineno + 1
                )));
            };
            let p: f64 = p.parse().map_err(|_| {
                Error::domain(format!("table line {}: bad probability {p:?}", lineno + 1))
            })?;
            let v: f64 = v.parse().map_err(|_| {
                Error::domain(format!("table line {}: bad value {v:?}", lineno + 1))
            })?;
            pairs.push((p, v));
        }
        DiscreteTable::new(&pairs)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Cumulative probabilities; entry `i` closes the preimage interval of
    /// `values[i]` under the quantile map.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }
}

/// A mean-0, variance-1 source distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    /// -1 or +1 with probability 1/2 each.
    TwoPoint,
    /// Uniform on [-sqrt(3), sqrt(3)].
    Uniform,
    /// Standard normal.
    Normal,
    /// Finite discrete table.
    Discrete(DiscreteTable),
}

/// A quantile that is a step function: interior cut points in (0,1) and the
/// value taken on each resulting interval (left-continuous steps).
#[derive(Debug, Clone)]
pub(crate) struct StepProfile {
    /// Ascending interior cut points `t_1 < ... < t_{K-1}`.
    pub cuts: Vec<f64>,
    /// `values[r]` is the quantile on `(t_r, t_{r+1}]` with `t_0 = 0`, `t_K = 1`.
    pub values: Vec<f64>,
}

impl DistributionSpec {
    /// Canonical name used in configuration echoes.
    pub fn name(&self) -> &'static str {
        match self {
            DistributionSpec::TwoPoint => "twopoint",
            DistributionSpec::Uniform => "uniform",
            DistributionSpec::Normal => "normal",
            DistributionSpec::Discrete(_) => "discrete",
        }
    }

    /// Step-function form of the quantile, for families that have one.
    pub(crate) fn step_profile(&self) -> Option<StepProfile> {
        match self {
            DistributionSpec::TwoPoint => Some(StepProfile {
                cuts: vec![0.5],
                values: vec![-1.0, 1.0],
            }),
            DistributionSpec::Discrete(t) => {
                let k = t.cumulative.len();
                Some(StepProfile {
                    cuts: t.cumulative[..k - 1].to_vec(),
                    values: t.values.clone(),
                })
            }
            _ => None,
        }
    }
}

/// Standard normal CDF, via the complementary error function so both tails
/// keep full relative accuracy.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x * FRAC_1_SQRT_2)
}

fn normal_quantile(u: f64) -> f64 {
    // Bracket, then bisect to a fixed interval width. The CDF is continuous
    // and strictly increasing, so the generalized inverse is the unique root.
    let mut lo = -10.0;
    let mut hi = 10.0;
    while normal_cdf(lo) >= u {
        lo -= 10.0;
    }
    while normal_cdf(hi) < u {
        hi += 10.0;
    }
    while hi - lo > NORMAL_QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) >= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Evaluates the quantile function `X(u) = inf { y : P(Z <= y) >= u }`.
///
/// For discrete families this is the left-continuous step function through
/// the cumulative table; for the normal family it is a bracketed bisection on
/// the CDF with interval width 1e-12.
pub fn quantile_eval(dist: &DistributionSpec, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!(
            "quantile argument {u} outside the open interval (0,1)"
        )));
    }
    Ok(match dist {
        DistributionSpec::TwoPoint => {
            if u <= 0.5 {
                -1.0
            } else {
                1.0
            }
        }
        DistributionSpec::Uniform => 3.0_f64.sqrt() * (2.0 * u - 1.0),
        DistributionSpec::Normal => normal_quantile(u),
        DistributionSpec::Discrete(t) => {
            // Smallest index whose cumulative probability reaches u.
            let idx = t.cumulative.partition_point(|&c| c < u);
            let idx = idx.min(t.values.len() - 1);
            t.values[idx]
        }
    })
}

/// Position of matrix entry `(row, col)` in the diagonal enumeration of an
/// infinite matrix: walking anti-diagonals `d = row + col - 1` top-right to
/// bottom-left, entry `(row, col)` is bit number `d(d-1)/2 + col` (1-based).
///
/// Rows of the matrix then read disjoint subsequences of one bit stream.
pub fn bit_position(row: u64, col: u64) -> Result<u64> {
    if row == 0 || col == 0 {
        return Err(Error::domain("bit matrix indices are 1-based"));
    }
    let d = row + col - 1;
    Ok(d * (d - 1) / 2 + col)
}

/// Number of binary digit positions of `u` in [0,1) that its f64
/// representation actually encodes. Digits beyond this are below the
/// representation's resolution; digits within it are exact (an f64 is a
/// dyadic rational, so the encoded expansion terminates with a zero tail).
pub(crate) fn available_bits(u: f64) -> u64 {
    if u == 0.0 {
        return u64::MAX; // every digit of 0 is 0
    }
    let raw_exp = (u.to_bits() >> 52) & 0x7ff;
    if raw_exp == 0 {
        // Subnormal: fixed-point with the last place at 2^-1074.
        1074
    } else {
        // u = 1.f * 2^e with e = raw_exp - 1023 < 0; the leading digit sits at
        // position -e and the significand spans 52 more.
        let e = raw_exp as i64 - 1023;
        (-e) as u64 + 52
    }
}

/// Binary digit of `u` in [0,1) at 1-based position `pos`.
///
/// Doubling and subtracting are exact floating-point operations here, so this
/// reads the digits of the dyadic rational `u` exactly, including the zero
/// tail past its significand.
pub(crate) fn binary_digit(u: f64, pos: u64) -> u8 {
    let mut frac = u;
    let mut digit = 0u8;
    for _ in 0..pos {
        frac *= 2.0;
        if frac >= 1.0 {
            digit = 1;
            frac -= 1.0;
        } else {
            digit = 0;
        }
    }
    digit
}

/// Reads column `i` of the bit matrix of `u` down to `depth` rows and
/// reassembles those digits into a number in [0,1):
/// `sum of digit(bit_position(r, i)) * 2^-r` for `r = 1..=depth`.
///
/// Distinct columns read disjoint digit sets, so the projections of a single
/// uniform variate are independent uniforms (up to the stated depth).
pub fn project_uniform(u: f64, i: u64, depth: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::domain(format!("projection argument {u} outside [0,1)")));
    }
    if i == 0 {
        return Err(Error::domain("column index is 1-based"));
    }
    if depth == 0 {
        return Err(Error::domain("projection depth must be at least 1"));
    }
    let deepest = bit_position(depth as u64, i)?;
    let avail = available_bits(u);
    if deepest > avail {
        return Err(Error::precision(format!(
            "projection needs digit {deepest} of {u}, but its representation encodes only {avail}"
        )));
    }
    let mut out = 0.0;
    let mut scale = 0.5;
    for r in 1..=depth as u64 {
        let pos = bit_position(r, i)?;
        if binary_digit(u, pos) == 1 {
            out += scale; // exact: distinct powers of two
        }
        scale *= 0.5;
    }
    Ok(out)
}

/// Draws `trials` independent realizations of `(X_1 + ... + X_n) / sqrt(n)`.
///
/// Each trial uses its own counter-derived substream of the seeded generator
/// (same key, stream index = trial index), so results are reproducible for a
/// fixed seed no matter how trials are scheduled across threads.
pub fn sample_iid_sums(
    dist: &DistributionSpec,
    n: u64,
    trials: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    sample_iid_sums_threaded(dist, n, trials, seed, 1)
}

/// [`sample_iid_sums`] with an explicit worker count; the output is
/// bit-identical for every `threads` value.
pub fn sample_iid_sums_threaded(
    dist: &DistributionSpec,
    n: u64,
    trials: u64,
    seed: u64,
    threads: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("sum length n must be at least 1"));
    }
    if trials == 0 {
        return Err(Error::domain("trial count must be at least 1"));
    }
    let trials_us = usize::try_from(trials)
        .map_err(|_| Error::budget(format!("trial count {trials} does not fit in memory")))?;
    let scale = 1.0 / (n as f64).sqrt();

    let run_trial = |trial: u64| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let mut sum = KahanSum::new();
        for _ in 0..n {
            let u: f64 = rng.sample(Open01);
            sum.add(quantile_eval(dist, u)?);
        }
        Ok(sum.value() * scale)
    };

    let threads = threads.max(1).min(trials_us);
    if threads == 1 {
        let mut out = Vec::with_capacity(trials_us);
        for t in 0..trials {
            out.push(run_trial(t)?);
        }
        return Ok(out);
    }

    let mut out = vec![0.0f64; trials_us];
    let chunk = trials_us.div_ceil(threads);
    let mut slices: Vec<(usize, &mut [f64])> = Vec::new();
    let mut rest: &mut [f64] = &mut out;
    let mut start = 0usize;
    while !rest.is_empty() {
        let take = chunk.min(rest.len());
        let (head, tail) = rest.split_at_mut(take);
        slices.push((start, head));
        start += take;
        rest = tail;
    }
    let first_err = std::sync::Mutex::new(None::<Error>);
    std::thread::scope(|scope| {
        for (offset, slice) in slices {
            let first_err = &first_err;
            scope.spawn(move || {
                for (k, slot) in slice.iter_mut().enumerate() {
                    match run_trial((offset + k) as u64) {
                        Ok(v) => *slot = v,
                        Err(e) => {
                            *first_err.lock().expect("poisoned") = Some(e);
                            return;
                        }
                    }
                }
            });
        }
    });
    if let Some(e) = first_err.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(out)
}
