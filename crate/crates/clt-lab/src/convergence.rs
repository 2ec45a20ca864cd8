//! Convergence diagnostics: lattice total-variation distance, truncated
//! expectation gaps, variance control for truncation, and Monte Carlo
//! cross-checks.
//!
//! The central quantity is the windowed total-variation-style distance
//! `D_n = sum |pmf - surrogate|` between the exact multinomial occupancy law
//! and its Gaussian lattice surrogate, which the theory bounds by
//! `2 m^2 / (3 sqrt(2 pi n))`. On top of it sit the three-way expectation
//! comparisons (multinomial vs. lattice Riemann sum vs. continuum Gaussian)
//! with explicit mass-deficit bookkeeping, and an independent sampling
//! estimate of the same expectations.

use crate::distributions::{sample_iid_sums_threaded, DistributionSpec};
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::gaussian::{
    box_deficit_bound, gaussian_expectation_reference, gaussian_riemann_sum,
    hyperplane_box_mass, select_box_halfwidth,
};
use crate::multinomial::{
    expectation_truncated, finish_log_pmf, fold_window, log_gaussian_surrogate,
    log_pmf_base, log_stirling_approx, tail_cutoff, LatticeWindow, LnFactorial,
    WindowAccumulator,
};
use crate::summation::KahanSum;
use crate::ExecConfig;
use std::f64::consts::PI;

/// Tolerance used for the continuum Gaussian reference expectations.
const REFERENCE_TOL: f64 = 1e-13;

/// Below this box-mass deficit the grid quadrature cannot resolve the tail
/// anyway, so `1 - box_deficit_bound` stands in for the integrated mass.
const BOX_TAIL_SHORTCUT: f64 = 1e-9;

/// Proven ceiling `2 m^2 / (3 sqrt(2 pi n))` for the windowed distance
/// between the occupancy law and its Gaussian surrogate.
pub fn theorem1_bound(n: u64, m: usize) -> Result<f64> {
    if n == 0 || m < 2 {
        return Err(Error::domain(format!(
            "bound needs n >= 1 and m >= 2, got n = {n}, m = {m}"
        )));
    }
    let mf = m as f64;
    Ok(2.0 * mf * mf / (3.0 * (2.0 * PI * n as f64).sqrt()))
}

/// Windowed distance between the occupancy law and the Gaussian surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct DnReport {
    pub n: u64,
    pub m: usize,
    pub b: f64,
    /// `sum |pmf - surrogate|` over the window.
    pub dn_value: f64,
    /// The proven ceiling for this `(n, m)`.
    pub bound: f64,
    /// Largest single `|pmf - surrogate|` term.
    pub per_term_max: f64,
    /// Exact probability mass the window captures.
    pub window_mass: f64,
    pub lattice_count: u64,
    pub used_stirling: bool,
}

struct DnAcc<'a> {
    table: Option<&'a LnFactorial>,
    n: u64,
    m: usize,
    log_base: KahanSum,
    sum: KahanSum,
    mass: KahanSum,
    max_term: f64,
}

impl DnAcc<'_> {
    fn log_pmf(&self, j: &[i64], counts: &[u64]) -> f64 {
        match self.table {
            Some(table) => finish_log_pmf(table, self.log_base, counts),
            None => log_stirling_approx(self.n, self.m, j),
        }
    }
}

impl WindowAccumulator for DnAcc<'_> {
    fn observe(&mut self, j: &[i64], counts: &[u64]) {
        let p = self.log_pmf(j, counts).exp();
        let g = log_gaussian_surrogate(self.n, self.m, j).exp();
        let d = (p - g).abs();
        self.sum.add(d);
        self.mass.add(p);
        if d > self.max_term {
            self.max_term = d;
        }
    }

    fn merge(&mut self, other: Self) {
        self.sum.merge(&other.sum);
        self.mass.merge(&other.mass);
        self.max_term = self.max_term.max(other.max_term);
    }
}

/// Computes the windowed distance `D_n` over `|j_i| <= floor(b sqrt n)`.
///
/// With `use_stirling` the exact pmf is replaced by its Stirling-corrected
/// surrogate, trading an `O(1/n)` relative error for skipping the factorial
/// table; the comparison then measures the corrected surrogate against the
/// plain Gaussian one.
pub fn compute_dn(
    n: u64,
    m: usize,
    b: f64,
    use_stirling: bool,
    cfg: &ExecConfig,
) -> Result<DnReport> {
    let win = LatticeWindow::new(n, m, b)?;
    let table = if use_stirling { None } else { Some(LnFactorial::new(n)) };
    let log_base = match &table {
        Some(t) => log_pmf_base(t, n, m),
        None => KahanSum::new(),
    };
    let make = || DnAcc {
        table: table.as_ref(),
        n,
        m,
        log_base,
        sum: KahanSum::new(),
        mass: KahanSum::new(),
        max_term: 0.0,
    };
    let (acc, visited) = fold_window(&win, cfg, make)?;
    Ok(DnReport {
        n,
        m,
        b,
        dn_value: acc.sum.value(),
        bound: theorem1_bound(n, m)?,
        per_term_max: acc.max_term,
        window_mass: acc.mass.value(),
        lattice_count: visited,
        used_stirling: use_stirling,
    })
}

/// One lattice point of a `D_n` evaluation, for per-term dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct DnTerm {
    pub j: Vec<i64>,
    pub pmf: f64,
    pub surrogate: f64,
}

struct DnTermsAcc<'a> {
    inner: DnAcc<'a>,
    terms: Vec<DnTerm>,
}

impl WindowAccumulator for DnTermsAcc<'_> {
    fn observe(&mut self, j: &[i64], counts: &[u64]) {
        let p = self.inner.log_pmf(j, counts).exp();
        let g = log_gaussian_surrogate(self.inner.n, self.inner.m, j).exp();
        self.terms.push(DnTerm { j: j.to_vec(), pmf: p, surrogate: g });
    }

    fn merge(&mut self, mut other: Self) {
        self.terms.append(&mut other.terms);
    }
}

/// Per-point pmf and surrogate values over the window, in canonical
/// enumeration order (first coordinate slowest). Runs single-threaded so the
/// order is the same no matter what `cfg.threads` says.
pub fn dn_terms(
    n: u64,
    m: usize,
    b: f64,
    use_stirling: bool,
    cfg: &ExecConfig,
) -> Result<Vec<DnTerm>> {
    let win = LatticeWindow::new(n, m, b)?;
    let table = if use_stirling { None } else { Some(LnFactorial::new(n)) };
    let log_base = match &table {
        Some(t) => log_pmf_base(t, n, m),
        None => KahanSum::new(),
    };
    let sequential = ExecConfig { threads: 1, ..*cfg };
    let make = || DnTermsAcc {
        inner: DnAcc {
            table: table.as_ref(),
            n,
            m,
            log_base,
            sum: KahanSum::new(),
            mass: KahanSum::new(),
            max_term: 0.0,
        },
        terms: Vec::new(),
    };
    let (acc, _) = fold_window(&win, &sequential, make)?;
    Ok(acc.terms)
}

/// Mass-deficit bookkeeping for a three-way expectation comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaComponents {
    /// Occupancy-law mass the window fails to capture.
    pub truncation_mass_deficit: f64,
    /// Limiting-Gaussian mass the box fails to capture.
    pub box_mass_deficit: f64,
    /// Distance between the lattice Riemann sum and the continuum reference.
    pub riemann_vs_reference: f64,
}

/// Three-way comparison of a truncated multinomial expectation, its Gaussian
/// Riemann sum, and the continuum Gaussian reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaReport {
    /// Window parameter actually used (supplied or auto-selected).
    pub window: f64,
    pub multinomial_value: f64,
    pub riemann_value: f64,
    pub reference_value: f64,
    /// `|multinomial - reference|`: the observed distance to the limit.
    pub gap: f64,
    pub components: DeltaComponents,
    pub budget_epsilon: f64,
    pub lattice_points: u64,
}

/// Compares the truncated occupancy-law expectation of
/// `f(sum o_i j_i / sqrt n)` against the continuum Gaussian reference.
///
/// When no window is supplied, one is selected so that both tail deficits
/// stay under `epsilon / 2`: the Chebyshev cutoff controls the lattice tail
/// and the marginal union bound controls the Gaussian box. A supplied window
/// is used as-is, but the achieved deficits are still checked against
/// `epsilon` and a violation is reported as a budget error.
pub fn clt_gap(
    outcomes: &[f64],
    n: u64,
    f: &TestFunction,
    epsilon: f64,
    window: Option<f64>,
    grid_step: f64,
    cfg: &ExecConfig,
) -> Result<DeltaReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!(
            "tail budget must lie in (0, 1), got {epsilon}"
        )));
    }
    let m = outcomes.len();
    let b = match window {
        Some(b) => b,
        None => {
            let b0 = tail_cutoff(0.5 * epsilon)?.integer as f64;
            let b1 = select_box_halfwidth(0.5 * epsilon, m)?;
            b0.max(b1)
        }
    };
    let mult = expectation_truncated(outcomes, n, b, f, cfg)?;
    let riemann = gaussian_riemann_sum(outcomes, n, b, f, cfg)?;
    let reference = gaussian_expectation_reference(f, REFERENCE_TOL)?;

    let win = LatticeWindow::new(n, m, b)?;
    let b_box = win.halfwidth() as f64 / (n as f64).sqrt();
    // The marginal union bound on the box deficit is exact for two cells and
    // conservative above; once it falls below the quadrature's resolution the
    // grid integral cannot improve on it, so the bound stands in for the
    // integrated mass. That keeps Chebyshev-driven windows (b of order
    // 1/sqrt(epsilon)) affordable for 3- and 4-cell boxes, whose tensor grid
    // would need (2 b / step)^(m-1) cells.
    let tail_bound = box_deficit_bound(m, b_box);
    let box_mass = if m > 4 {
        // Beyond four cells the continuum box integral is out of reach; the
        // discrete surrogate mass over the same window stands in for it.
        riemann.mass
    } else if tail_bound <= BOX_TAIL_SHORTCUT {
        1.0 - tail_bound
    } else {
        hyperplane_box_mass(m, b_box, grid_step)?
    };
    let components = DeltaComponents {
        truncation_mass_deficit: 1.0 - mult.window_mass,
        box_mass_deficit: 1.0 - box_mass,
        riemann_vs_reference: (riemann.value - reference).abs(),
    };
    if components.truncation_mass_deficit > epsilon {
        return Err(Error::budget(format!(
            "window {b} captures occupancy mass {} but the budget tolerates a deficit of only {epsilon}",
            mult.window_mass
        )));
    }
    if components.box_mass_deficit > epsilon {
        return Err(Error::budget(format!(
            "window {b} captures limiting-Gaussian mass {box_mass} but the budget tolerates a deficit of only {epsilon}"
        )));
    }
    Ok(DeltaReport {
        window: b,
        multinomial_value: mult.value,
        riemann_value: riemann.value,
        reference_value: reference,
        gap: (mult.value - reference).abs(),
        components,
        budget_epsilon: epsilon,
        lattice_points: mult.lattice_points,
    })
}

/// Worst-case variance inflation from replacing a unit-variance summand by
/// its renormalized truncation with captured deviation `sigma`:
/// `(1 - sigma^2) + 2 (1 - sigma) sqrt(1 - sigma^2) + (1 - sigma)^2`.
pub fn truncation_variance_bound(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 1.0 + 1e-9) {
        return Err(Error::domain(format!(
            "captured deviation must lie in (0, 1], got {sigma}"
        )));
    }
    let s = sigma.min(1.0);
    let gap_sq = 1.0 - s * s;
    let gap = 1.0 - s;
    Ok(gap_sq + 2.0 * gap * gap_sq.sqrt() + gap * gap)
}

/// A sampling estimate of `E f(S_n / sqrt n)` with its distance to the
/// continuum Gaussian reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McReport {
    pub estimate: f64,
    /// Standard error of the estimate (sample deviation over `sqrt(trials)`).
    pub std_error: f64,
    pub reference_value: f64,
    pub gap: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Estimates `E f(S_n / sqrt n)` by simulation.
///
/// Each trial draws `n` quantile-transformed variates on an independent,
/// seed-derived stream, so results are bit-identical for a fixed seed no
/// matter how many threads run.
pub fn monte_carlo_gap(
    dist: &DistributionSpec,
    n: u64,
    f: &TestFunction,
    trials: u64,
    seed: u64,
    cfg: &ExecConfig,
) -> Result<McReport> {
    if trials < 2 {
        return Err(Error::domain(format!(
            "need at least two trials for a standard error, got {trials}"
        )));
    }
    let sums = sample_iid_sums_threaded(dist, n, trials, seed, cfg.threads.max(1))?;
    let values: Vec<f64> = sums.iter().map(|&s| f.eval(s)).collect();
    let mean = KahanSum::sum_iter(values.iter().copied()) / trials as f64;
    let ss = KahanSum::sum_iter(values.iter().map(|&v| {
        let d = v - mean;
        d * d
    }));
    let variance = ss / (trials - 1) as f64;
    let std_error = (variance / trials as f64).sqrt();
    let reference = gaussian_expectation_reference(f, REFERENCE_TOL)?;
    Ok(McReport {
        estimate: mean,
        std_error,
        reference_value: reference,
        gap: (mean - reference).abs(),
        trials,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::ln_gamma;

    fn cfg() -> ExecConfig {
        ExecConfig::default()
    }

    #[test]
    fn bound_frozen_values_and_scaling() {
        assert!((theorem1_bound(4, 2).unwrap() - 0.53192304).abs() < 1e-7);
        assert!((theorem1_bound(100, 2).unwrap() - 0.10638461).abs() < 1e-7);
        // Quadrupling n halves the bound.
        let r = theorem1_bound(64, 2).unwrap() / theorem1_bound(256, 2).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert!(theorem1_bound(0, 2).is_err());
        assert!(theorem1_bound(8, 1).is_err());
    }

    #[test]
    fn dn_small_case_against_direct_computation() {
        // n = 4, m = 2, b = 1: five lattice points, binomial pmf
        // {1,4,6,4,1}/16, surrogate d_4 exp(-j^2/2).
        let report = compute_dn(4, 2, 1.0, false, &cfg()).unwrap();
        let d4 = (2.0f64 / (2.0 * PI * 4.0)).sqrt() * 2.0f64.sqrt();
        let mut oracle = 0.0;
        let mut max_term: f64 = 0.0;
        for j in -2i64..=2 {
            let k = (2 + j) as f64;
            let pmf = (ln_gamma(5.0) - ln_gamma(k + 1.0) - ln_gamma(5.0 - k)).exp() / 16.0;
            let sur = d4 * (-0.5 * (j * j) as f64).exp();
            oracle += (pmf - sur).abs();
            max_term = max_term.max((pmf - sur).abs());
        }
        assert!((report.dn_value - oracle).abs() < 1e-13, "{} vs {oracle}", report.dn_value);
        assert!((report.per_term_max - max_term).abs() < 1e-15);
        assert_eq!(report.lattice_count, 5);
        assert!((report.window_mass - 1.0).abs() < 1e-14);
        assert!(!report.used_stirling);
    }

    #[test]
    fn dn_respects_the_proven_ceiling() {
        for n in [16u64, 64, 256] {
            let r = compute_dn(n, 2, 3.0, false, &cfg()).unwrap();
            assert!(r.dn_value <= r.bound, "n = {n}: {} > {}", r.dn_value, r.bound);
        }
        let r = compute_dn(64, 4, 2.0, false, &cfg()).unwrap();
        assert!(r.dn_value <= r.bound);
    }

    #[test]
    fn stirling_variant_tracks_the_exact_distance() {
        // Both the exact pmf and its corrected surrogate sit within O(1/n) of
        // the Gaussian weight, but their O(1/n) remainders differ (the
        // surrogate truncates the count-factorial expansion at the cubic
        // term), so the two windowed distances agree in order of magnitude
        // rather than value: at n = 256 the observed ratio is ≈ 2.7.
        let exact = compute_dn(256, 2, 3.0, false, &cfg()).unwrap();
        let approx = compute_dn(256, 2, 3.0, true, &cfg()).unwrap();
        assert!(approx.used_stirling);
        assert!(!exact.used_stirling);
        let ratio = approx.dn_value / exact.dn_value;
        assert!(
            (0.2..5.0).contains(&ratio),
            "distances should agree in order of magnitude: {} vs {}",
            approx.dn_value,
            exact.dn_value
        );
        assert!(approx.dn_value <= approx.bound);
        assert!(exact.dn_value <= exact.bound);
    }

    #[test]
    fn term_dump_is_consistent_with_the_report() {
        let report = compute_dn(16, 2, 2.0, false, &cfg()).unwrap();
        let terms = dn_terms(16, 2, 2.0, false, &cfg()).unwrap();
        assert_eq!(terms.len() as u64, report.lattice_count);
        let total: f64 = terms.iter().map(|t| (t.pmf - t.surrogate).abs()).sum();
        assert!((total - report.dn_value).abs() < 1e-14);
        // Canonical order: first coordinate ascending.
        for w in terms.windows(2) {
            assert!(w[0].j[0] <= w[1].j[0]);
        }
    }

    #[test]
    fn gap_report_for_a_balanced_two_cell_law() {
        let r = clt_gap(&[-1.0, 1.0], 16, &TestFunction::Cos, 0.01, None, 0.01, &cfg()).unwrap();
        // Auto-selected window: Chebyshev forces b = 15, far past the simplex
        // clamp, so the truncation deficit is numerically zero.
        assert!(r.window >= 15.0);
        assert!(r.components.truncation_mass_deficit.abs() < 1e-12);
        assert!(r.components.box_mass_deficit < 0.005);
        assert!(r.components.riemann_vs_reference < 1e-3);
        assert!((r.reference_value - (-0.5f64).exp()).abs() < 1e-12);
        assert!(r.gap < 0.06, "gap {}", r.gap);
        assert_eq!(r.budget_epsilon, 0.01);
    }

    #[test]
    fn auto_window_stays_affordable_for_four_cells() {
        // Chebyshev again forces b = 15. A tensor grid over a four-cell box
        // that wide would need 3000^3 cells, so the box-mass component must
        // come from the tail bound, which underflows to zero here.
        let out = crate::haar::truncate_expansion(&DistributionSpec::Uniform, 1).unwrap();
        let r = clt_gap(out.outcomes(), 64, &TestFunction::Cos, 0.01, None, 0.01, &cfg()).unwrap();
        assert!(r.window >= 15.0);
        assert!(r.components.truncation_mass_deficit.abs() < 1e-12);
        assert_eq!(r.components.box_mass_deficit, 0.0);
        assert!(r.gap.is_finite());
        assert!(r.gap < 0.2, "gap {}", r.gap);
    }

    #[test]
    fn forced_narrow_window_trips_the_budget() {
        let err = clt_gap(
            &[-1.0, 1.0],
            64,
            &TestFunction::Cos,
            1e-6,
            Some(0.5),
            0.01,
            &cfg(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Budget(_)));
    }

    #[test]
    fn gap_rejects_bad_budget() {
        assert!(clt_gap(&[-1.0, 1.0], 16, &TestFunction::One, 0.0, None, 0.01, &cfg()).is_err());
        assert!(clt_gap(&[-1.0, 1.0], 16, &TestFunction::One, 1.0, None, 0.01, &cfg()).is_err());
    }

    #[test]
    fn variance_bound_frozen_value_and_edges() {
        let v = truncation_variance_bound(0.9).unwrap();
        assert!((v - 0.2871779788708135).abs() < 1e-12);
        assert_eq!(truncation_variance_bound(1.0).unwrap(), 0.0);
        // A hair above 1 from rounding is clamped, not rejected.
        assert_eq!(truncation_variance_bound(1.0 + 1e-10).unwrap(), 0.0);
        assert!(truncation_variance_bound(0.0).is_err());
        assert!(truncation_variance_bound(1.1).is_err());
        assert!(truncation_variance_bound(-0.5).is_err());
    }

    #[test]
    fn monte_carlo_degenerate_cases_are_exact() {
        let r = monte_carlo_gap(&DistributionSpec::TwoPoint, 8, &TestFunction::One, 100, 7, &cfg())
            .unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.std_error, 0.0);
        // The reference side is quadrature, good to ~1e-14 — the sampling
        // side is exactly 1.
        assert!(r.gap < 1e-13);
        // n = 1: every trial lands on +-1 and cos is even, so the sample is
        // constant.
        let r = monte_carlo_gap(&DistributionSpec::TwoPoint, 1, &TestFunction::Cos, 500, 7, &cfg())
            .unwrap();
        assert!((r.estimate - 1.0f64.cos()).abs() < 1e-14);
        assert!(r.std_error < 1e-12);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_thread_stable() {
        let a = monte_carlo_gap(&DistributionSpec::Uniform, 16, &TestFunction::Tanh, 2000, 42, &cfg())
            .unwrap();
        let b = monte_carlo_gap(&DistributionSpec::Uniform, 16, &TestFunction::Tanh, 2000, 42, &cfg())
            .unwrap();
        assert_eq!(a.estimate, b.estimate);
        let c = monte_carlo_gap(
            &DistributionSpec::Uniform,
            16,
            &TestFunction::Tanh,
            2000,
            42,
            &ExecConfig::with_threads(4),
        )
        .unwrap();
        assert_eq!(a.estimate, c.estimate);
        assert_eq!(a.std_error, c.std_error);
    }

    #[test]
    fn monte_carlo_estimate_lands_near_the_reference() {
        let r = monte_carlo_gap(&DistributionSpec::TwoPoint, 64, &TestFunction::Cos, 4000, 11, &cfg())
            .unwrap();
        assert!(r.gap <= 4.0 * r.std_error + 0.02, "gap {} se {}", r.gap, r.std_error);
    }

    #[test]
    fn monte_carlo_needs_two_trials() {
        let err =
            monte_carlo_gap(&DistributionSpec::TwoPoint, 8, &TestFunction::One, 1, 7, &cfg())
                .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }
}
