//! Haar expansion and truncation of quantile functions.
//!
//! The Haar basis on [0,1) is `H_{j,k} = 2^(j/2)` on the first half of the
//! dyadic cell `[k/2^j, (k+1)/2^j)`, `-2^(j/2)` on the second half, 0
//! elsewhere. Expanding a quantile function `X` in this basis and keeping
//! levels `j <= M` produces a simple function constant on `m = 2^(M+1)` cells;
//! renormalized by the captured standard deviation `sigma_M`, its cell values
//! ("outcomes") satisfy `sum o_i = 0` and `sum o_i^2 = m`, which is exactly
//! what the downstream multinomial machinery needs.
//!
//! Coefficients `c_{j,k} = integral of X * H_{j,k}` are computed in closed
//! form where the quantile allows it: exact piecewise products for step
//! quantiles (two-point and discrete tables), the exact level formula for the
//! uniform family, and clipped adaptive quadrature for the normal family
//! (the quantile is unbounded, so each cell is integrated over
//! `[eta, 1 - eta]`; the variance lost to the clipped tails is reported
//! alongside the expansion).

use crate::distributions::{binary_digit, quantile_eval, DistributionSpec};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::summation::KahanSum;
use std::f64::consts::FRAC_1_SQRT_2;

/// Endpoint clipping for unbounded quantiles.
pub const ENDPOINT_CLIP: f64 = 1e-8;
/// Absolute tolerance for one quadrature-computed coefficient.
const COEFF_QUAD_TOL: f64 = 1e-10;
/// Truncation levels above this blow the dyadic-cell budget (`m = 2^(M+1)`).
pub const MAX_LEVEL: u32 = 20;

/// `2^(j/2)`, built from an exact integer power and the correctly rounded
/// constant `sqrt(2)` so even levels are exact.
fn pow2_half(j: u32) -> f64 {
    if j % 2 == 0 {
        2.0f64.powi((j / 2) as i32)
    } else {
        2.0f64.powi(((j - 1) / 2) as i32) * std::f64::consts::SQRT_2
    }
}

/// `2^(-e/2)` for a nonnegative integer `e`.
fn pow2_neg_half(e: u32) -> f64 {
    if e % 2 == 0 {
        2.0f64.powi(-((e / 2) as i32))
    } else {
        2.0f64.powi(-(((e - 1) / 2) as i32)) * FRAC_1_SQRT_2
    }
}

/// Evaluates the Haar function `H_{j,k}` at `x`.
pub fn haar_eval(j: u32, k: u64, x: f64) -> Result<f64> {
    if j > 62 {
        return Err(Error::domain(format!("Haar level {j} overflows the dyadic index range")));
    }
    if k >= 1u64 << j {
        return Err(Error::domain(format!(
            "Haar index k = {k} out of range for level {j} (max {})",
            (1u64 << j) - 1
        )));
    }
    if !(0.0..1.0).contains(&x) {
        return Err(Error::domain(format!("Haar argument {x} outside [0,1)")));
    }
    // Exact: multiplying by 2^j only shifts the exponent.
    let scaled = x * 2.0f64.powi(j as i32);
    if (scaled as u64) != k {
        return Ok(0.0);
    }
    let first_half = scaled - k as f64 + 0.5 < 1.0;
    Ok(if first_half { pow2_half(j) } else { -pow2_half(j) })
}

/// Exact integral of a step quantile against `H_{j,k}`.
fn step_coeff(cuts: &[f64], values: &[f64], j: u32, k: u64) -> f64 {
    let h = 2.0f64.powi(-(j as i32));
    let a = k as f64 * h;
    let mid = a + 0.5 * h;
    let b = a + h;
    let s = pow2_half(j);
    // Breakpoints of the product X * H inside [a, b).
    let mut pts = vec![a, mid, b];
    for &t in cuts {
        if t > a && t < b {
            pts.push(t);
        }
    }
    pts.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    let mut acc = KahanSum::new();
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q <= p {
            continue;
        }
        let probe = 0.5 * (p + q);
        // Value of the step quantile on (p, q): first interval whose closing
        // cut lies beyond the probe.
        let idx = cuts.partition_point(|&t| t < probe);
        let xval = values[idx.min(values.len() - 1)];
        let hval = if probe < mid { s } else { -s };
        acc.add(xval * hval * (q - p));
    }
    acc.value()
}

/// Coefficient `c_{j,k}` of the quantile of `dist` in the Haar basis.
pub fn haar_coeff(dist: &DistributionSpec, j: u32, k: u64) -> Result<f64> {
    if j > MAX_LEVEL {
        return Err(Error::domain(format!("Haar level {j} above the supported cap {MAX_LEVEL}")));
    }
    if k >= 1u64 << j {
        return Err(Error::domain(format!(
            "Haar index k = {k} out of range for level {j}"
        )));
    }
    match dist {
        DistributionSpec::TwoPoint | DistributionSpec::Discrete(_) => {
            let profile = dist.step_profile().expect("step family");
            Ok(step_coeff(&profile.cuts, &profile.values, j, k))
        }
        DistributionSpec::Uniform => {
            // The quantile is the line sqrt(3)(2u - 1); integrating it against
            // H_{j,k} gives -(sqrt(3)/2) * 2^(-3j/2) for every k.
            Ok(-(3.0f64.sqrt() * 0.5) * pow2_neg_half(3 * j))
        }
        DistributionSpec::Normal => {
            let h = 2.0f64.powi(-(j as i32));
            let a = k as f64 * h;
            let mid = a + 0.5 * h;
            let b = a + h;
            let s = pow2_half(j);
            let lo = a.max(ENDPOINT_CLIP);
            let hi = b.min(1.0 - ENDPOINT_CLIP);
            let x = |u: f64| quantile_eval(dist, u).expect("u stays inside (0,1)");
            let first = if mid > lo {
                quadrature::integrate(&x, lo, mid.min(hi), 0.5 * COEFF_QUAD_TOL)?
            } else {
                0.0
            };
            let second = if hi > mid {
                quadrature::integrate(&x, mid.max(lo), hi, 0.5 * COEFF_QUAD_TOL)?
            } else {
                0.0
            };
            Ok(s * (first - second))
        }
    }
}

/// Variance of the quantile lost to the `[0, eta)` and `(1 - eta, 1]`
/// endpoint clips; zero for bounded families.
pub fn clipped_tail_variance(dist: &DistributionSpec) -> Result<f64> {
    match dist {
        DistributionSpec::Normal => {
            // Substitute u = eta * exp(-t): the integrand becomes smooth and
            // exponentially decaying, so plain adaptive quadrature converges
            // where direct integration of the log singularity would crawl.
            let eta = ENDPOINT_CLIP;
            let g = |t: f64| {
                let u = eta * (-t).exp();
                let x = quantile_eval(dist, u).expect("u in (0,1)");
                x * x * u
            };
            let one_tail = quadrature::integrate(&g, 0.0, 700.0, 1e-13)?;
            // The normal quantile is antisymmetric, so both tails match.
            Ok(2.0 * one_tail)
        }
        _ => Ok(0.0),
    }
}

/// One stored coefficient of an expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaarCoeff {
    pub j: u32,
    pub k: u64,
    pub c: f64,
}

/// A truncated, renormalized Haar expansion of a quantile function.
///
/// `outcomes[i]` is the value of the truncated simple function on the dyadic
/// cell `[i/m, (i+1)/m)` with `m = 2^(M+1)` (indices 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct HaarExpansion {
    level: u32,
    /// Coefficients by level: `levels[j][k] = c_{j,k}`.
    levels: Vec<Vec<f64>>,
    sigma_m: f64,
    /// Captured variance, accumulated exactly where the family allows it;
    /// kept separately because squaring `sigma_m` reintroduces rounding.
    sigma_sq: f64,
    outcomes: Vec<f64>,
    clipped_tail_variance: f64,
}

impl HaarExpansion {
    /// Truncation level `M`.
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of dyadic cells, `m = 2^(M+1)`.
    pub fn cells(&self) -> usize {
        self.outcomes.len()
    }

    /// Captured standard deviation `sigma_M`.
    pub fn sigma_m(&self) -> f64 {
        self.sigma_m
    }

    /// Captured variance `sigma_M^2`.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn clipped_tail_variance(&self) -> f64 {
        self.clipped_tail_variance
    }

    /// Stored coefficients in `(j, k)` order.
    pub fn coeffs(&self) -> Vec<HaarCoeff> {
        let mut out = Vec::new();
        for (j, level) in self.levels.iter().enumerate() {
            for (k, &c) in level.iter().enumerate() {
                out.push(HaarCoeff { j: j as u32, k: k as u64, c });
            }
        }
        out
    }

    /// Rebuilds an expansion from stored parts (a parsed export file).
    ///
    /// Every level through `level` must be fully covered by `coeffs`; the
    /// numeric fields are taken as-is so a round trip through an export is
    /// bit-exact.
    pub fn from_parts(
        level: u32,
        coeffs: &[HaarCoeff],
        sigma_m: f64,
        sigma_sq: f64,
        outcomes: Vec<f64>,
        clipped_tail_variance: f64,
    ) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::domain(format!(
                "stored truncation level {level} above the supported cap {MAX_LEVEL}"
            )));
        }
        let mut levels: Vec<Vec<Option<f64>>> =
            (0..=level).map(|j| vec![None; 1usize << j]).collect();
        for c in coeffs {
            if c.j > level || c.k >= 1u64 << c.j {
                return Err(Error::domain(format!(
                    "stored coefficient index ({}, {}) out of range for level {level}",
                    c.j, c.k
                )));
            }
            let slot = &mut levels[c.j as usize][c.k as usize];
            if slot.is_some() {
                return Err(Error::domain(format!(
                    "duplicate stored coefficient at ({}, {})",
                    c.j, c.k
                )));
            }
            if !c.c.is_finite() {
                return Err(Error::domain(format!(
                    "non-finite stored coefficient at ({}, {})",
                    c.j, c.k
                )));
            }
            *slot = Some(c.c);
        }
        let mut filled = Vec::with_capacity(levels.len());
        for (j, row) in levels.into_iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (k, v) in row.into_iter().enumerate() {
                out.push(v.ok_or_else(|| {
                    Error::domain(format!("missing stored coefficient at ({j}, {k})"))
                })?);
            }
            filled.push(out);
        }
        if outcomes.len() != 1usize << (level + 1) {
            return Err(Error::domain(format!(
                "stored outcome count {} does not match 2^(M+1) = {}",
                outcomes.len(),
                1usize << (level + 1)
            )));
        }
        if !(sigma_m.is_finite() && sigma_m > 0.0 && sigma_sq.is_finite() && sigma_sq > 0.0) {
            return Err(Error::domain(
                "stored sigma fields must be finite and positive".to_string(),
            ));
        }
        if outcomes.iter().any(|o| !o.is_finite()) || !clipped_tail_variance.is_finite() {
            return Err(Error::domain("non-finite stored value".to_string()));
        }
        Ok(HaarExpansion {
            level,
            levels: filled,
            sigma_m,
            sigma_sq,
            outcomes,
            clipped_tail_variance,
        })
    }

    /// Evaluates the truncated, renormalized expansion at `x` in [0,1).
    ///
    /// The summation order matches the one used to build `outcomes`, so for
    /// every `x` this equals `outcomes[floor(m * x)]` bit for bit.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::domain(format!("evaluation point {x} outside [0,1)")));
        }
        let mut sum = 0.0;
        for (j, level) in self.levels.iter().enumerate() {
            // Exponent shift: exact.
            let scaled = x * 2.0f64.powi(j as i32);
            let cell = scaled as usize;
            let sign = if binary_digit(x, j as u64 + 1) == 1 { -1.0 } else { 1.0 };
            sum += pow2_half(j as u32) * level[cell] * sign;
        }
        Ok(sum / self.sigma_m)
    }
}

/// Expands the quantile of `dist` in the Haar basis through level `M` and
/// renormalizes by the captured standard deviation.
pub fn truncate_expansion(dist: &DistributionSpec, m_level: u32) -> Result<HaarExpansion> {
    if m_level > MAX_LEVEL {
        return Err(Error::domain(format!(
            "truncation level {m_level} above the supported cap {MAX_LEVEL}"
        )));
    }
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(m_level as usize + 1);
    for j in 0..=m_level {
        let mut row = Vec::with_capacity(1usize << j);
        for k in 0..(1u64 << j) {
            row.push(haar_coeff(dist, j, k)?);
        }
        levels.push(row);
    }

    let sigma_sq = match dist {
        DistributionSpec::Uniform => {
            // The level-j coefficients are all -(sqrt(3)/2) 2^(-3j/2), so the
            // level energy is the exact binary fraction 3/4 * 4^-j; summing
            // those is exact in f64 and yields sigma^2 = 1 - 4^-(M+1).
            let mut s = 0.0;
            for j in 0..=m_level {
                s += 0.75 * 0.25f64.powi(j as i32);
            }
            s
        }
        _ => {
            let mut s = KahanSum::new();
            for level in &levels {
                for &c in level {
                    s.add(c * c);
                }
            }
            s.value()
        }
    };
    if sigma_sq <= 0.0 {
        return Err(Error::numeric(
            "degenerate expansion: every retained coefficient is zero, nothing to normalize",
        ));
    }
    let sigma_m = sigma_sq.sqrt();

    let cells = 1usize << (m_level + 1);
    let mut partial = HaarExpansion {
        level: m_level,
        levels,
        sigma_m,
        sigma_sq,
        outcomes: Vec::new(),
        clipped_tail_variance: clipped_tail_variance(dist)?,
    };
    let mut outcomes = Vec::with_capacity(cells);
    let denom = 2.0 * cells as f64;
    for i in 0..cells {
        // Cell midpoints are exact dyadics, so the digit signs are exact.
        let x = (2 * i + 1) as f64 / denom;
        outcomes.push(partial.evaluate(x)?);
    }
    partial.outcomes = outcomes;
    Ok(partial)
}

/// Captured-variance defect `1 - sigma_M^2` of an expansion.
pub fn truncation_defect(exp: &HaarExpansion) -> f64 {
    1.0 - exp.sigma_sq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DiscreteTable;

    #[test]
    fn haar_eval_matches_the_definition() {
        assert_eq!(haar_eval(0, 0, 0.25).unwrap(), 1.0);
        assert_eq!(haar_eval(0, 0, 0.75).unwrap(), -1.0);
        assert_eq!(haar_eval(1, 1, 0.75).unwrap(), -std::f64::consts::SQRT_2);
        assert_eq!(haar_eval(1, 1, 0.5).unwrap(), std::f64::consts::SQRT_2);
        assert_eq!(haar_eval(1, 0, 0.9).unwrap(), 0.0);
        assert!(haar_eval(1, 2, 0.5).is_err());
        assert!(haar_eval(0, 0, 1.0).is_err());
        assert!(haar_eval(0, 0, -0.1).is_err());
    }

    #[test]
    fn haar_family_is_orthonormal_through_level_four() {
        // Every H with j <= 4 is constant on the 32 cells of width 1/32, and
        // its value there is sign * 2^(j/2). Integrating products reduces to
        // integer sign arithmetic, which is exact — no floating-point
        // tolerance involved.
        let mut fns = Vec::new();
        for j in 0..=4u32 {
            for k in 0..(1u64 << j) {
                fns.push((j, k));
            }
        }
        for &(j1, k1) in &fns {
            for &(j2, k2) in &fns {
                let mut int_sum = 0i64;
                for cell in 0..32 {
                    let x = (2 * cell + 1) as f64 / 64.0;
                    let v1 = haar_eval(j1, k1, x).unwrap();
                    let v2 = haar_eval(j2, k2, x).unwrap();
                    // Values must be exactly 0 or +-2^(j/2).
                    for (j, v) in [(j1, v1), (j2, v2)] {
                        assert!(v == 0.0 || v.abs() == pow2_half(j));
                    }
                    int_sum += v1.signum() as i64 * v2.signum() as i64
                        * if v1 == 0.0 || v2 == 0.0 { 0 } else { 1 };
                }
                if (j1, k1) == (j2, k2) {
                    // integral = int_sum * 2^j / 32 must be exactly 1.
                    assert_eq!(int_sum, 1i64 << (5 - j1), "({j1},{k1})");
                } else {
                    assert_eq!(int_sum, 0, "({j1},{k1}) vs ({j2},{k2})");
                }
            }
        }
    }

    #[test]
    fn two_point_coefficients_are_exact() {
        let d = DistributionSpec::TwoPoint;
        assert_eq!(haar_coeff(&d, 0, 0).unwrap(), -1.0);
        assert_eq!(haar_coeff(&d, 1, 0).unwrap(), 0.0);
        assert_eq!(haar_coeff(&d, 1, 1).unwrap(), 0.0);
        assert_eq!(haar_coeff(&d, 3, 5).unwrap(), 0.0);
    }

    #[test]
    fn uniform_coefficients_follow_the_level_formula() {
        let d = DistributionSpec::Uniform;
        let c00 = haar_coeff(&d, 0, 0).unwrap();
        assert_eq!(c00, -3.0f64.sqrt() / 2.0);
        // Same value across k within a level; ratio 2^(-3/2) between levels.
        for j in 1..=4 {
            let c = haar_coeff(&d, j, 0).unwrap();
            for k in 1..(1u64 << j) {
                assert_eq!(haar_coeff(&d, j, k).unwrap(), c);
            }
            let prev = haar_coeff(&d, j - 1, 0).unwrap();
            assert!((c / prev - 0.125f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn normal_level_zero_coefficient_matches_closed_form() {
        // integral of the normal quantile against H_{0,0} is -sqrt(2/pi);
        // endpoint clipping at 1e-8 biases it by ~1e-7, no more.
        let c = haar_coeff(&DistributionSpec::Normal, 0, 0).unwrap();
        let exact = -(2.0 / std::f64::consts::PI).sqrt();
        assert!((c - exact).abs() < 2e-7, "c = {c}, exact = {exact}");
    }

    #[test]
    fn discrete_table_coefficient_against_direct_integration() {
        let a = (1.5f64).sqrt();
        let b = (0.5f64).sqrt();
        let t = DiscreteTable::new(&[(0.25, -a), (0.25, -b), (0.25, b), (0.25, a)]).unwrap();
        let d = DistributionSpec::Discrete(t);
        // c_{0,0} = int_0^.5 X - int_.5^1 X = (-a-b)/4 - (b+a)/4 = -(a+b)/2.
        let c = haar_coeff(&d, 0, 0).unwrap();
        assert!((c + (a + b) / 2.0).abs() < 1e-15);
        // c_{1,0} = sqrt2 * (int_0^.25 X - int_.25^.5 X) = sqrt2 (-a+b)/4.
        let c = haar_coeff(&d, 1, 0).unwrap();
        assert!((c - std::f64::consts::SQRT_2 * (b - a) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_truncation_is_exact_at_every_level() {
        let d = DistributionSpec::TwoPoint;
        let e0 = truncate_expansion(&d, 0).unwrap();
        assert_eq!(e0.sigma_m(), 1.0);
        assert_eq!(e0.outcomes(), &[-1.0, 1.0]);
        assert_eq!(truncation_defect(&e0), 0.0);
        let e1 = truncate_expansion(&d, 1).unwrap();
        assert_eq!(e1.sigma_m(), 1.0);
        assert_eq!(e1.outcomes(), &[-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(truncation_defect(&e1), 0.0);
    }

    #[test]
    fn uniform_truncation_level_zero() {
        let e = truncate_expansion(&DistributionSpec::Uniform, 0).unwrap();
        assert_eq!(e.sigma_m(), 0.75f64.sqrt());
        assert_eq!(e.outcomes(), &[-1.0, 1.0]);
        // The captured variance is the exact binary fraction 3/4, so the
        // defect is exactly 1/4 — not 1/4 plus an ulp.
        assert_eq!(truncation_defect(&e), 0.25);
    }

    #[test]
    fn uniform_defect_quarters_per_level() {
        let mut prev = truncation_defect(&truncate_expansion(&DistributionSpec::Uniform, 0).unwrap());
        for m in 1..=5 {
            let d = truncation_defect(&truncate_expansion(&DistributionSpec::Uniform, m).unwrap());
            assert_eq!(d, 0.25 * prev, "level {m}");
            prev = d;
        }
    }

    #[test]
    fn outcomes_balance_and_energy() {
        let dists = [
            DistributionSpec::TwoPoint,
            DistributionSpec::Uniform,
            DistributionSpec::Normal,
        ];
        for d in &dists {
            let max_level = if matches!(d, DistributionSpec::Normal) { 3 } else { 5 };
            for m_level in 0..=max_level {
                let e = truncate_expansion(d, m_level).unwrap();
                let m = e.cells() as f64;
                let sum = KahanSum::sum_iter(e.outcomes().iter().copied());
                let energy = KahanSum::sum_iter(e.outcomes().iter().map(|o| o * o));
                assert!(sum.abs() <= 1e-9 * m, "{} M={m_level}: sum {sum}", d.name());
                assert!(
                    (energy - m).abs() <= 1e-9 * m,
                    "{} M={m_level}: energy {energy} vs {m}",
                    d.name()
                );
            }
        }
    }

    #[test]
    fn captured_variance_is_monotone_and_bounded() {
        for d in [
            DistributionSpec::TwoPoint,
            DistributionSpec::Uniform,
            DistributionSpec::Normal,
        ] {
            let max_level = if matches!(d, DistributionSpec::Normal) { 3 } else { 6 };
            let mut prev = 0.0;
            for m_level in 0..=max_level {
                let e = truncate_expansion(&d, m_level).unwrap();
                assert!(e.sigma_sq() >= prev, "{} level {m_level}", d.name());
                assert!(e.sigma_sq() <= 1.0 + 1e-12, "{} level {m_level}", d.name());
                // sigma_m must agree with the root of the stored coefficients'
                // energy.
                let from_coeffs: f64 =
                    KahanSum::sum_iter(e.coeffs().iter().map(|c| c.c * c.c)).sqrt();
                assert!((e.sigma_m() - from_coeffs).abs() <= 1e-12);
                prev = e.sigma_sq();
            }
        }
    }

    #[test]
    fn evaluation_is_cellwise_constant_bit_for_bit() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for d in [DistributionSpec::Uniform, DistributionSpec::TwoPoint] {
            let e = truncate_expansion(&d, 3).unwrap();
            let m = e.cells() as f64;
            for _ in 0..10_000 {
                let x: f64 = rng.gen();
                let cell = (x * m) as usize;
                assert_eq!(e.evaluate(x).unwrap(), e.outcomes()[cell]);
            }
        }
    }

    #[test]
    fn level_cap_is_enforced() {
        let err = truncate_expansion(&DistributionSpec::TwoPoint, 21).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(haar_coeff(&DistributionSpec::TwoPoint, 21, 0).is_err());
    }

    #[test]
    fn clip_variance_only_for_unbounded_families() {
        assert_eq!(clipped_tail_variance(&DistributionSpec::TwoPoint).unwrap(), 0.0);
        assert_eq!(clipped_tail_variance(&DistributionSpec::Uniform).unwrap(), 0.0);
        let v = clipped_tail_variance(&DistributionSpec::Normal).unwrap();
        // Each tail holds ~ eta * X(eta)^2 ~ 1e-8 * 31.5 of variance.
        assert!(v > 1e-7 && v < 1e-6, "clip variance {v}");
    }
}
