//! Gaussian reference quantities for the lattice approximations.
//!
//! Three objects live here, all tied to the limiting law of the centered
//! occupancy fractions `Y_i = (k_i - n/m) / sqrt(n)`:
//!
//! * exact expectations `E f(Z)` for a standard normal `Z`, computed by
//!   adaptive quadrature and used as the reference the lattice expectations
//!   converge to;
//! * the mass the limiting hyperplane Gaussian assigns to the box window
//!   `|y_i| <= b` (1-D quadrature for two cells, a tensor midpoint grid for
//!   three and four);
//! * the Riemann sum that evaluates the Gaussian surrogate over the same
//!   lattice window the multinomial fold walks, so the two sides can be
//!   compared point for point.

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::multinomial::{fold_window, log_gaussian_surrogate, LatticeWindow, WindowAccumulator};
use crate::quadrature;
use crate::summation::KahanSum;
use crate::ExecConfig;
use std::f64::consts::PI;

/// Integration range for normal expectations; the omitted tails hold less
/// than 1e-30 of mass even against polynomially growing integrands.
const NORMAL_RANGE: f64 = 12.0;

/// `E f(Z)` for standard normal `Z`, by adaptive quadrature to absolute
/// tolerance `tol`.
pub fn gaussian_expectation_reference(f: &TestFunction, tol: f64) -> Result<f64> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let norm = (2.0 * PI).sqrt().recip();
    let g = |z: f64| norm * (-0.5 * z * z).exp() * f.eval(z);
    quadrature::integrate(&g, -NORMAL_RANGE, NORMAL_RANGE, tol)
}

/// Density of the limiting hyperplane Gaussian at free coordinates `y`.
fn hyperplane_density(m: usize, y: &[f64]) -> f64 {
    let mf = m as f64;
    let mut quad = 0.0;
    let mut s = 0.0;
    for &yi in y {
        quad += yi * yi;
        s += yi;
    }
    quad += s * s;
    mf.sqrt() * (mf / (2.0 * PI)).powf(0.5 * (mf - 1.0)) * (-0.5 * mf * quad).exp()
}

/// Mass the limiting hyperplane Gaussian assigns to the box `|y_i| <= b`
/// over the free coordinates.
///
/// Two cells reduce to a one-dimensional integral evaluated adaptively to
/// 1e-13 (`grid_step` is ignored). Three and four cells use a tensor
/// midpoint rule with step `grid_step`, whose O(step^2) error is plenty for
/// the mass-deficit bookkeeping it feeds.
pub fn hyperplane_box_mass(m: usize, b: f64, grid_step: f64) -> Result<f64> {
    if !(2..=4).contains(&m) {
        return Err(Error::domain(format!(
            "box mass supports 2 to 4 cells, got {m}"
        )));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::domain(format!("box halfwidth must be positive, got {b}")));
    }
    if m == 2 {
        let g = |y: f64| hyperplane_density(2, &[y]);
        return quadrature::integrate(&g, -b, b, 1e-13);
    }
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::domain(format!(
            "grid step must be positive, got {grid_step}"
        )));
    }
    let dims = m - 1;
    let cells_per_dim = ((2.0 * b) / grid_step).ceil() as usize;
    if cells_per_dim == 0 || (cells_per_dim as u128).pow(dims as u32) > 1u128 << 33 {
        return Err(Error::budget(format!(
            "midpoint grid would need {cells_per_dim}^{dims} cells; coarsen the step"
        )));
    }
    let h = 2.0 * b / cells_per_dim as f64;
    let mut idx = vec![0usize; dims];
    let mut y = vec![0.0f64; dims];
    let mut acc = KahanSum::new();
    loop {
        for (yi, &ti) in y.iter_mut().zip(idx.iter()) {
            *yi = -b + (ti as f64 + 0.5) * h;
        }
        acc.add(hyperplane_density(m, &y));
        let mut d = dims;
        loop {
            if d == 0 {
                let volume = h.powi(dims as i32);
                return Ok(acc.value() * volume);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < cells_per_dim {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Upper bound on the box-mass deficit `1 - mass(b)` via the union of the
/// free coordinates' marginal tails; exact for two cells.
pub fn box_deficit_bound(m: usize, b: f64) -> f64 {
    // Each free coordinate is centered Gaussian with variance (m-1)/m^2.
    let mf = m as f64;
    let sigma = (mf - 1.0).sqrt() / mf;
    (mf - 1.0) * statrs::function::erf::erfc(b / (sigma * std::f64::consts::SQRT_2))
}

/// Smallest box halfwidth (to within 1e-3) whose limiting-Gaussian mass
/// deficit is at most `epsilon`.
///
/// Uses the marginal union bound, so the returned halfwidth is conservative
/// for more than two cells.
pub fn select_box_halfwidth(epsilon: f64, m: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!(
            "mass budget must lie in (0, 1), got {epsilon}"
        )));
    }
    if m < 2 {
        return Err(Error::domain(format!("need at least two cells, got {m}")));
    }
    let mut lo = 0.0f64;
    let mut hi = 20.0f64;
    if box_deficit_bound(m, hi) > epsilon {
        return Err(Error::domain(format!(
            "mass budget {epsilon} unreachable within halfwidth {hi}"
        )));
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if box_deficit_bound(m, mid) <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Result of evaluating the Gaussian surrogate over a lattice window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianRiemann {
    /// Sum of `surrogate * f(sum o_i j_i / sqrt n)` over the window.
    pub value: f64,
    /// Sum of the surrogate alone: the discrete Gaussian window mass.
    pub mass: f64,
    /// Lattice points enumerated.
    pub lattice_points: u64,
}

struct RiemannAcc<'a> {
    n: u64,
    m: usize,
    outcomes: &'a [f64],
    f: &'a TestFunction,
    inv_sqrt_n: f64,
    mass: KahanSum,
    value: KahanSum,
}

impl WindowAccumulator for RiemannAcc<'_> {
    fn observe(&mut self, j: &[i64], _counts: &[u64]) {
        let w = log_gaussian_surrogate(self.n, self.m, j).exp();
        let mut dot = 0.0;
        for (&o, &ji) in self.outcomes.iter().zip(j.iter()) {
            dot += o * ji as f64;
        }
        self.mass.add(w);
        self.value.add(w * self.f.eval(dot * self.inv_sqrt_n));
    }

    fn merge(&mut self, other: Self) {
        self.mass.merge(&other.mass);
        self.value.merge(&other.value);
    }
}

/// Riemann sum of the Gaussian surrogate against `f` over the same window
/// the multinomial fold enumerates.
pub fn gaussian_riemann_sum(
    outcomes: &[f64],
    n: u64,
    b: f64,
    f: &TestFunction,
    cfg: &ExecConfig,
) -> Result<GaussianRiemann> {
    let m = outcomes.len();
    let win = LatticeWindow::new(n, m, b)?;
    let inv_sqrt_n = (n as f64).sqrt().recip();
    let make = || RiemannAcc {
        n,
        m,
        outcomes,
        f,
        inv_sqrt_n,
        mass: KahanSum::new(),
        value: KahanSum::new(),
    };
    let (acc, visited) = fold_window(&win, cfg, make)?;
    Ok(GaussianRiemann {
        value: acc.value.value(),
        mass: acc.mass.value(),
        lattice_points: visited,
    })
}
