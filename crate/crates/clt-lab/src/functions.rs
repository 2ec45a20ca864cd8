//! Registry of test functions for expectations.
//!
//! Expectation operations take one of these named functions rather than an
//! arbitrary closure so runs are reproducible from their configuration alone
//! and each function's sup-norm is known to the error-budget bookkeeping.
//! `xsq` is unbounded; callers must acknowledge that explicitly (the CLI flag
//! `--allow-unbounded`) because the bounded-function error budgets do not
//! apply to it.

use crate::error::{Error, Result};

/// A named test function from the registry.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// Constant 1 (turns expectations into masses).
    One,
    Cos,
    Sin,
    Tanh,
    /// Smoothed indicator of `[a, b]`: cubic ramps of width `w` inside each
    /// end, identically 1 on `[a+w, b-w]` and 0 outside `[a, b]`.
    IndicatorSmooth { a: f64, b: f64, w: f64 },
    /// `x^2` — unbounded, gated behind an explicit acknowledgment.
    XSquared,
}

fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * (3.0 - 2.0 * t)
    }
}

impl TestFunction {
    /// Parses a registry name: `one`, `cos`, `sin`, `tanh`,
    /// `indicator_smooth(a,b,w)`, or `xsq` (the latter only when
    /// `allow_unbounded` is set).
    pub fn parse(spec: &str, allow_unbounded: bool) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "one" => return Ok(TestFunction::One),
            "cos" => return Ok(TestFunction::Cos),
            "sin" => return Ok(TestFunction::Sin),
            "tanh" => return Ok(TestFunction::Tanh),
            "xsq" => {
                return if allow_unbounded {
                    Ok(TestFunction::XSquared)
                } else {
                    Err(Error::domain(
                        "xsq is unbounded; pass --allow-unbounded to acknowledge that the \
                         bounded-function error budgets do not apply",
                    ))
                };
            }
            _ => {}
        }
        if let Some(rest) = spec.strip_prefix("indicator_smooth(") {
            let Some(args) = rest.strip_suffix(')') else {
                return Err(Error::domain(format!("unbalanced parentheses in {spec:?}")));
            };
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::domain(format!(
                    "indicator_smooth takes (a,b,w), got {spec:?}"
                )));
            }
            let mut nums = [0.0f64; 3];
            for (slot, part) in nums.iter_mut().zip(&parts) {
                *slot = part
                    .parse()
                    .map_err(|_| Error::domain(format!("bad number {part:?} in {spec:?}")))?;
            }
            let [a, b, w] = nums;
            if !(a.is_finite() && b.is_finite() && w.is_finite()) {
                return Err(Error::domain("indicator_smooth parameters must be finite"));
            }
            if a >= b {
                return Err(Error::domain(format!(
                    "indicator_smooth needs a < b, got a = {a}, b = {b}"
                )));
            }
            if w <= 0.0 {
                return Err(Error::domain(format!(
                    "indicator_smooth ramp width must be positive, got {w}"
                )));
            }
            return Ok(TestFunction::IndicatorSmooth { a, b, w });
        }
        Err(Error::domain(format!(
            "unknown function {spec:?}; registry: one, cos, sin, tanh, indicator_smooth(a,b,w), xsq"
        )))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::Cos => x.cos(),
            TestFunction::Sin => x.sin(),
            TestFunction::Tanh => x.tanh(),
            TestFunction::IndicatorSmooth { a, b, w } => {
                smoothstep((x - a) / w) * smoothstep((b - x) / w)
            }
            TestFunction::XSquared => x * x,
        }
    }

    /// Sup-norm, or `None` for the unbounded `xsq`.
    pub fn sup_norm(&self) -> Option<f64> {
        match self {
            TestFunction::XSquared => None,
            _ => Some(1.0),
        }
    }

    /// Canonical registry spelling, parseable by [`TestFunction::parse`].
    pub fn name(&self) -> String {
        match self {
            TestFunction::One => "one".into(),
            TestFunction::Cos => "cos".into(),
            TestFunction::Sin => "sin".into(),
            TestFunction::Tanh => "tanh".into(),
            TestFunction::IndicatorSmooth { a, b, w } => {
                format!("indicator_smooth({a},{b},{w})")
            }
            TestFunction::XSquared => "xsq".into(),
        }
    }
}
