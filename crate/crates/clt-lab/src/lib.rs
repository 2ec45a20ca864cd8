//! A numerical laboratory for watching standardized i.i.d. sums approach the
//! Gaussian law.
//!
//! The pipeline has three legs that are built to be compared against each
//! other:
//!
//! 1. **Haar truncation** ([`haar`]): a source distribution's quantile
//!    function is expanded in the Haar basis and truncated at level `M`,
//!    yielding a simple function constant on `m = 2^(M+1)` dyadic cells with
//!    outcome values that sum to 0 and have energy `m`.
//! 2. **Exact multinomial enumeration** ([`multinomial`]): sums of the
//!    truncated variable are multinomial in the cell counts; expectations are
//!    enumerated exactly over a Chebyshev window of the count lattice in
//!    log-space with compensated summation.
//! 3. **Gaussian side** ([`gaussian`]): the matching Riemann sums of the
//!    Gaussian density over the same lattice, continuum reference
//!    expectations by adaptive quadrature, and hyperplane box masses.
//!
//! [`convergence`] stitches the legs together: the total discrepancy `D_n`
//! between exact multinomial weights and Gaussian weights with its `1/sqrt(n)`
//! bound, and end-to-end expectation gaps with their error-budget components.
//! [`distributions`] supplies quantiles, the diagonal bit-matrix projections,
//! and seeded sampling; [`functions`] is the registry of test functions.

pub mod distributions;
pub mod error;
pub mod functions;
pub mod gaussian;
pub mod haar;
pub mod multinomial;
pub mod quadrature;
pub mod report;
pub mod summation;

pub mod convergence;

pub use error::{Error, Result};

/// Execution limits shared by the enumeration-heavy operations.
#[derive(Debug, Clone)]
pub struct ExecConfig {
    /// Worker threads for lattice partitions and sampling. Partial results
    /// are combined in fixed partition order, so any thread count is
    /// deterministic; 1 reproduces the single-threaded sum bit for bit.
    pub threads: usize,
    /// Maximum number of candidate lattice points an enumeration may visit.
    pub lattice_budget: u64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig { threads: 1, lattice_budget: 100_000_000 }
    }
}

impl ExecConfig {
    pub fn with_threads(threads: usize) -> Self {
        ExecConfig { threads, ..Default::default() }
    }
}
