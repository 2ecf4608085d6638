use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the domain box")]
    OutsideDomain { x: f64, y: f64 },

    #[error("orbit escaped the safety box at step {index}")]
    Escape { index: usize },

    #[error("{what} did not converge (last residual {residual:e})")]
    NoConvergence { what: String, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("hyperbolicity insufficient: {0}")]
    HyperbolicityInsufficient(String),

    #[error("fiber derivative degenerates; map not Hénon-like here (min |δ| = {min_delta:e})")]
    FiberDegenerate { min_delta: f64 },

    #[error("domain mismatch: {skipped} of {total} sample points left the domains")]
    DomainMismatch { skipped: usize, total: usize },

    #[error("not dissipative: determinant modulus {0} is not below 1")]
    NotDissipative(f64),

    #[error("chart condition failed: {0}")]
    ChartCondition(String),

    #[error("bracket does not contain a sign change on [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
