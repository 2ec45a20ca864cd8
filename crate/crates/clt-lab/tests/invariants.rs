//! Cross-module invariants: properties that tie the expansion, lattice,
//! Gaussian, and report layers together, checked over randomized inputs
//! where a single frozen example would prove too little.

use clt_lab::convergence::{clt_gap, truncation_variance_bound};
use clt_lab::distributions::{DiscreteTable, DistributionSpec};
use clt_lab::functions::TestFunction;
use clt_lab::haar::truncate_expansion;
use clt_lab::multinomial::{expectation_truncated, log_stirling_approx, multinomial_log_pmf, LnFactorial};
use clt_lab::report::{expansion_from_json, expansion_to_json};
use clt_lab::ExecConfig;
use proptest::prelude::*;

fn cfg() -> ExecConfig {
    ExecConfig::default()
}

/// Sorts, normalizes, and standardizes raw `(weight, value)` atoms into a
/// mean-0, variance-1 table, rejecting draws whose atoms sit too close
/// together or whose spread is too small to standardize stably.
fn standardized_table(raw: &[(f64, f64)]) -> Option<DiscreteTable> {
    let mut atoms = raw.to_vec();
    atoms.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"));
    if atoms.windows(2).any(|w| w[1].1 - w[0].1 < 1e-3) {
        return None;
    }
    let total: f64 = atoms.iter().map(|&(w, _)| w).sum();
    let probs: Vec<f64> = atoms.iter().map(|&(w, _)| w / total).collect();
    let mut values: Vec<f64> = atoms.iter().map(|&(_, v)| v).collect();
    // Two centering/rescaling passes leave the residual mean and variance
    // error at rounding level, inside the table constructor's tolerances.
    for _ in 0..2 {
        let mean: f64 = probs.iter().zip(&values).map(|(p, v)| p * v).sum();
        for v in &mut values {
            *v -= mean;
        }
        let var: f64 = probs.iter().zip(&values).map(|(p, v)| p * v * v).sum();
        if var < 1e-2 {
            return None;
        }
        let scale = var.sqrt();
        for v in &mut values {
            *v /= scale;
        }
    }
    let pairs: Vec<(f64, f64)> = probs.iter().copied().zip(values).collect();
    DiscreteTable::new(&pairs).ok()
}

fn arb_table() -> impl Strategy<Value = DiscreteTable> {
    proptest::collection::vec((0.05f64..1.0, -10.0f64..10.0), 2..=5)
        .prop_filter_map("atoms too close or too concentrated", |raw| {
            standardized_table(&raw)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any admissible law, truncated at any small level, must yield balanced
    /// unit-energy outcomes, a captured variance that never exceeds 1 and
    /// never shrinks with the level, a bit-exact serialization round trip,
    /// and a step evaluation that agrees with the cell table bit for bit.
    #[test]
    fn random_laws_keep_balance_energy_and_round_trip(
        table in arb_table(),
        level in 0u32..=2,
        x in 0.0f64..1.0,
    ) {
        let dist = DistributionSpec::Discrete(table);
        let exp = truncate_expansion(&dist, level).unwrap();
        // Badly conditioned truncations (nearly all variance beyond the kept
        // scales) trade the tight tolerances below for magnitude; skip them.
        prop_assume!(exp.sigma_sq() > 1e-2);

        let m = exp.cells() as f64;
        let balance: f64 = exp.outcomes().iter().sum();
        let energy: f64 = exp.outcomes().iter().map(|o| o * o).sum();
        prop_assert!(balance.abs() <= 1e-9 * m, "balance {balance}");
        prop_assert!((energy - m).abs() <= 1e-9 * m, "energy {energy}");
        prop_assert!(exp.sigma_sq() <= 1.0 + 1e-12);

        let deeper = truncate_expansion(&dist, level + 1).unwrap();
        prop_assert!(deeper.sigma_sq() >= exp.sigma_sq() - 1e-12);

        let text = expansion_to_json(&exp);
        let back = expansion_from_json(&text).unwrap();
        prop_assert_eq!(&expansion_to_json(&back), &text);

        let cell = ((x * m) as usize).min(exp.cells() - 1);
        prop_assert_eq!(
            exp.evaluate(x).unwrap().to_bits(),
            exp.outcomes()[cell].to_bits()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The truncated window never loses more occupancy mass than the
    /// Chebyshev floor 1/b² allows, for either cell count.
    #[test]
    fn window_mass_obeys_the_chebyshev_floor(
        four_cells in proptest::bool::ANY,
        k in 4u64..=24,
        b in 1.0f64..6.0,
    ) {
        let (level, m) = if four_cells { (1, 4) } else { (0, 2) };
        let exp = truncate_expansion(&DistributionSpec::TwoPoint, level).unwrap();
        let n = m * k;
        let r = expectation_truncated(exp.outcomes(), n, b, &TestFunction::One, &cfg()).unwrap();
        let deficit = 1.0 - r.window_mass;
        prop_assert!(deficit <= 1.0 / (b * b) + 1e-12, "deficit {deficit} at b {b}");
        prop_assert!(r.window_mass <= 1.0 + 1e-12);
    }
}

/// Four-cell counterpart of the surrogate-accuracy law: the relative error
/// of the corrected surrogate over the window with every |j_i| ≤ √n decays
/// like C/n. The discarded same-order quartic term dominates at the window
/// corners, so C climbs toward m³ = 64 (measured 39.8 at n = 64 and 55.6 at
/// n = 256) rather than the interior's (m² − 1)/12.
#[test]
fn four_cell_surrogate_error_decays_like_one_over_n() {
    let mut maxima = Vec::new();
    for n in [64u64, 256] {
        let table = LnFactorial::new(n);
        let hw = (n as f64).sqrt().floor() as i64;
        let quarter = (n / 4) as i64;
        let mut worst: f64 = 0.0;
        for j1 in -hw..=hw {
            for j2 in -hw..=hw {
                for j3 in -hw..=hw {
                    let j4 = -(j1 + j2 + j3);
                    if j4.abs() > hw {
                        continue;
                    }
                    let j = [j1, j2, j3, j4];
                    let counts = j.map(|ji| (quarter + ji) as u64);
                    let exact = multinomial_log_pmf(&table, n, &counts).unwrap();
                    let approx = log_stirling_approx(n, 4, &j);
                    worst = worst.max(((approx - exact).exp() - 1.0).abs());
                }
            }
        }
        assert!(
            worst * n as f64 <= 70.0,
            "n={n}: fitted constant {} exceeds the corner ceiling",
            worst * n as f64
        );
        maxima.push(worst);
    }
    assert!(maxima[0] > maxima[1], "maxima should shrink: {maxima:?}");
}

/// The full pipeline is deterministic for a fixed thread count and agrees
/// across thread counts to rounding level.
#[test]
fn pipeline_reports_align_across_thread_counts() {
    let exp = truncate_expansion(&DistributionSpec::Uniform, 1).unwrap();
    let run = |threads: usize| {
        clt_gap(
            exp.outcomes(),
            64,
            &TestFunction::Cos,
            0.01,
            Some(2.0),
            0.01,
            &ExecConfig::with_threads(threads),
        )
        .unwrap()
    };
    let base = run(1);
    let again = run(1);
    assert_eq!(base.gap.to_bits(), again.gap.to_bits());
    assert_eq!(
        base.multinomial_value.to_bits(),
        again.multinomial_value.to_bits()
    );
    for threads in [2, 3, 8] {
        let other = run(threads);
        assert!(
            (base.gap - other.gap).abs() <= 1e-13,
            "threads {threads}: {} vs {}",
            base.gap,
            other.gap
        );
        assert!((base.multinomial_value - other.multinomial_value).abs() <= 1e-13);
    }
}

/// Deeper truncations capture more deviation, so the worst-case variance
/// inflation bound computed from sigma_M must fall as the level grows.
#[test]
fn variance_inflation_bound_falls_with_the_level() {
    let mut last = f64::INFINITY;
    for level in 0..=6 {
        let exp = truncate_expansion(&DistributionSpec::Normal, level).unwrap();
        let bound = truncation_variance_bound(exp.sigma_m()).unwrap();
        assert!(bound >= 0.0);
        assert!(bound < last, "level {level}: {bound} !< {last}");
        last = bound;
    }
    assert!(last < 0.02, "level-6 bound should be small, got {last}");
}
