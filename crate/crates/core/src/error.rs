use thiserror::Error;

/// Errors raised by the estimation, attack and design routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: estimated error {achieved:.3e} exceeds tolerance {requested:.3e}")]
    QuadratureFailure { achieved: f64, requested: f64 },

    #[error("sampling is unsupported for this distribution: {0}")]
    UnsupportedSampling(String),

    #[error(
        "no root of the estimating equation: no sign change after {doublings} bracket doublings"
    )]
    NoRoot { doublings: usize },

    #[error("estimating equation has {} roots near {roots:?}; refusing to pick one", roots.len())]
    AmbiguousRoot { roots: Vec<f64> },

    #[error("degenerate estimator: {0}")]
    Degenerate(String),

    #[error("sample {index} (x = {value}) sits on a breakpoint of psi'; dither the data")]
    BreakpointAmbiguity { index: usize, value: f64 },

    #[error("null gradient: every sensitivity c_n is zero, the estimator is locally insensitive")]
    NullGradient,

    #[error("oracle size guard: brute force supports N <= 4 and >= 11 grid points per dimension (got N = {n}, grid = {grid})")]
    OracleSize { n: usize, grid: usize },

    #[error("infeasible IF budget xi = {xi}: feasible budgets must exceed {smallest_feasible:.6}")]
    InfeasibleBudget { xi: f64, smallest_feasible: f64 },

    #[error("xi = {0} is outside the closed-form regime (requires xi > 1)")]
    OutOfRegime(f64),

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
