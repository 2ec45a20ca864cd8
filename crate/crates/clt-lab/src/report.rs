//! Serialization of expansions and reports.
//!
//! Every floating-point value is written with 17 significant digits
//! (`{:.16e}`), which round-trips any finite f64 exactly, and objects are
//! assembled by hand with a fixed key order — the same inputs always produce
//! the same bytes. Parsing goes through `serde_json`, which accepts the
//! emitted number format as ordinary JSON.

use crate::error::{Error, Result};
use crate::haar::{HaarCoeff, HaarExpansion};
use crate::convergence::{DeltaReport, DnReport, DnTerm, McReport};
use crate::gaussian::GaussianRiemann;
use serde_json::Value;
use std::fmt::Write as _;

/// Formats a float with 17 significant digits; parses back to the same bits.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// A truncated expansion as a JSON object string.
pub fn expansion_to_json(exp: &HaarExpansion) -> String {
    let mut s = String::new();
    write!(
        s,
        "{{\"level\":{},\"sigma_m\":{},\"sigma_sq\":{},\"clipped_tail_variance\":{},\"coeffs\":[",
        exp.level(),
        fmt_g17(exp.sigma_m()),
        fmt_g17(exp.sigma_sq()),
        fmt_g17(exp.clipped_tail_variance()),
    )
    .expect("string write");
    for (i, c) in exp.coeffs().iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{{\"j\":{},\"k\":{},\"c\":{}}}", c.j, c.k, fmt_g17(c.c)).expect("string write");
    }
    s.push_str("],\"outcomes\":[");
    for (i, &o) in exp.outcomes().iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&fmt_g17(o));
    }
    s.push_str("]}");
    s
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| Error::domain(format!("expansion file missing field \"{key}\"")))
}

fn as_f64(v: &Value, key: &str) -> Result<f64> {
    field(v, key)?
        .as_f64()
        .ok_or_else(|| Error::domain(format!("field \"{key}\" is not a number")))
}

fn as_u64(v: &Value, key: &str) -> Result<u64> {
    field(v, key)?
        .as_u64()
        .ok_or_else(|| Error::domain(format!("field \"{key}\" is not a nonnegative integer")))
}

/// Parses an expansion previously written by [`expansion_to_json`].
pub fn expansion_from_json(text: &str) -> Result<HaarExpansion> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| Error::domain(format!("expansion file is not valid JSON: {e}")))?;
    let level = as_u64(&v, "level")?;
    if level > u32::MAX as u64 {
        return Err(Error::domain(format!("stored level {level} out of range")));
    }
    let sigma_m = as_f64(&v, "sigma_m")?;
    let sigma_sq = as_f64(&v, "sigma_sq")?;
    let clipped = as_f64(&v, "clipped_tail_variance")?;
    let coeffs_v = field(&v, "coeffs")?
        .as_array()
        .ok_or_else(|| Error::domain("field \"coeffs\" is not an array".to_string()))?;
    let mut coeffs = Vec::with_capacity(coeffs_v.len());
    for c in coeffs_v {
        let j = as_u64(c, "j")?;
        if j > u32::MAX as u64 {
            return Err(Error::domain(format!("stored coefficient level {j} out of range")));
        }
        coeffs.push(HaarCoeff { j: j as u32, k: as_u64(c, "k")?, c: as_f64(c, "c")? });
    }
    let outcomes_v = field(&v, "outcomes")?
        .as_array()
        .ok_or_else(|| Error::domain("field \"outcomes\" is not an array".to_string()))?;
    let mut outcomes = Vec::with_capacity(outcomes_v.len());
    for o in outcomes_v {
        outcomes.push(
            o.as_f64()
                .ok_or_else(|| Error::domain("outcome entry is not a number".to_string()))?,
        );
    }
    HaarExpansion::from_parts(level as u32, &coeffs, sigma_m, sigma_sq, outcomes, clipped)
}

/// A truncated expansion as CSV, prefixed with a `# `-style provenance line.
pub fn expansion_to_csv(exp: &HaarExpansion, provenance: &str) -> String {
    let mut s = format!("# {provenance}\nrecord,j,k,value\n");
    for c in exp.coeffs() {
        writeln!(s, "coeff,{},{},{}", c.j, c.k, fmt_g17(c.c)).expect("string write");
    }
    writeln!(s, "sigma_m,,,{}", fmt_g17(exp.sigma_m())).expect("string write");
    writeln!(s, "sigma_sq,,,{}", fmt_g17(exp.sigma_sq())).expect("string write");
    writeln!(s, "clipped_tail_variance,,,{}", fmt_g17(exp.clipped_tail_variance()))
        .expect("string write");
    for (i, &o) in exp.outcomes().iter().enumerate() {
        writeln!(s, "outcome,{i},,{}", fmt_g17(o)).expect("string write");
    }
    s
}

/// A windowed-distance report as a JSON object string.
pub fn dn_report_json(r: &DnReport) -> String {
    format!(
        "{{\"n\":{},\"m\":{},\"b\":{},\"dn_value\":{},\"bound\":{},\"per_term_max\":{},\"window_mass\":{},\"lattice_count\":{},\"used_stirling\":{}}}",
        r.n,
        r.m,
        fmt_g17(r.b),
        fmt_g17(r.dn_value),
        fmt_g17(r.bound),
        fmt_g17(r.per_term_max),
        fmt_g17(r.window_mass),
        r.lattice_count,
        r.used_stirling,
    )
}

/// A three-way gap report as a JSON object string.
pub fn delta_report_json(r: &DeltaReport) -> String {
    format!(
        "{{\"window\":{},\"multinomial_value\":{},\"riemann_value\":{},\"reference_value\":{},\"gap\":{},\"components\":{{\"truncation_mass_deficit\":{},\"box_mass_deficit\":{},\"riemann_vs_reference\":{}}},\"budget_epsilon\":{},\"lattice_points\":{}}}",
        fmt_g17(r.window),
        fmt_g17(r.multinomial_value),
        fmt_g17(r.riemann_value),
        fmt_g17(r.reference_value),
        fmt_g17(r.gap),
        fmt_g17(r.components.truncation_mass_deficit),
        fmt_g17(r.components.box_mass_deficit),
        fmt_g17(r.components.riemann_vs_reference),
        fmt_g17(r.budget_epsilon),
        r.lattice_points,
    )
}

/// A sampling report as a JSON object string.
pub fn mc_report_json(r: &McReport) -> String {
    format!(
        "{{\"estimate\":{},\"std_error\":{},\"reference_value\":{},\"gap\":{},\"trials\":{},\"seed\":{}}}",
        fmt_g17(r.estimate),
        fmt_g17(r.std_error),
        fmt_g17(r.reference_value),
        fmt_g17(r.gap),
        r.trials,
        r.seed,
    )
}

/// A lattice Gaussian sum as a JSON object string.
pub fn riemann_report_json(r: &GaussianRiemann) -> String {
    format!(
        "{{\"value\":{},\"mass\":{},\"lattice_points\":{}}}",
        fmt_g17(r.value),
        fmt_g17(r.mass),
        r.lattice_points,
    )
}

/// Per-lattice-point dump of a windowed-distance evaluation as CSV.
pub fn dn_terms_csv(terms: &[DnTerm], m: usize, provenance: &str) -> String {
    let mut s = format!("# {provenance}\n");
    for i in 1..=m {
        write!(s, "j_{i},").expect("string write");
    }
    s.push_str("pmf,surrogate,abs_diff\n");
    for t in terms {
        for ji in &t.j {
            write!(s, "{ji},").expect("string write");
        }
        writeln!(
            s,
            "{},{},{}",
            fmt_g17(t.pmf),
            fmt_g17(t.surrogate),
            fmt_g17((t.pmf - t.surrogate).abs())
        )
        .expect("string write");
    }
    s
}

/// A sweep of windowed-distance reports as CSV.
pub fn dn_sweep_csv(rows: &[DnReport], provenance: &str) -> String {
    let mut s = format!(
        "# {provenance}\nn,m,b,dn_value,bound,per_term_max,window_mass,lattice_count,used_stirling\n"
    );
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.n,
            r.m,
            fmt_g17(r.b),
            fmt_g17(r.dn_value),
            fmt_g17(r.bound),
            fmt_g17(r.per_term_max),
            fmt_g17(r.window_mass),
            r.lattice_count,
            r.used_stirling,
        )
        .expect("string write");
    }
    s
}

/// A sweep of three-way gap reports as CSV, one row per sample size.
pub fn delta_sweep_csv(rows: &[(u64, DeltaReport)], provenance: &str) -> String {
    let mut s = format!(
        "# {provenance}\nn,window,multinomial_value,riemann_value,reference_value,gap,truncation_mass_deficit,box_mass_deficit,riemann_vs_reference\n"
    );
    for (n, r) in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            n,
            fmt_g17(r.window),
            fmt_g17(r.multinomial_value),
            fmt_g17(r.riemann_value),
            fmt_g17(r.reference_value),
            fmt_g17(r.gap),
            fmt_g17(r.components.truncation_mass_deficit),
            fmt_g17(r.components.box_mass_deficit),
            fmt_g17(r.components.riemann_vs_reference),
        )
        .expect("string write");
    }
    s
}
