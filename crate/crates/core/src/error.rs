use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("field and manifold grids do not match")]
    GridMismatch,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("chart radius {radius} exceeds the admissible bound {limit}")]
    RadiusTooLarge { radius: f64, limit: f64 },
    #[error("operator is not coercive (margin {margin:?})")]
    NotCoercive { margin: Option<f64> },
    #[error("no convergence to tolerance {tol:e} after {iterations} iterations")]
    NoConvergence { tol: f64, iterations: usize },
    #[error("denominator of the quotient is not positive ({0})")]
    DenominatorNonpositive(f64),
    #[error("iterate lost positivity (clipped mass fraction {clipped_fraction:e})")]
    NonpositiveIterate { clipped_fraction: f64 },
    #[error("lambda estimate {lambda} exceeds the ceiling {ceiling} by more than {tol:e}")]
    CeilingViolation { lambda: f64, ceiling: f64, tol: f64 },
    #[error("continuation collapsed onto the grid: {resolved} resolved exponents remain")]
    UnderResolved { resolved: usize, lambda: f64 },
    #[error("dimension {dim} is not supported here: {reason}")]
    UnsupportedDimension { dim: usize, reason: String },
    #[error("radial integral I(p={p}, q={q}) diverges (requires q - p > 3)")]
    Divergent { p: i32, q: i32 },
    #[error("point is not a maximum of f")]
    NotAMaximum,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("mass fit is unstable: {0}")]
    FitUnstable(String),
    #[error("chart field is not radial (anisotropy {0:e})")]
    NotRadial(f64),
    #[error("family is empty")]
    EmptyFamily,
    #[error("classification does not change along the path ({lo} at the start, {hi} at the end)")]
    NoSignChange { lo: String, hi: String },
    #[error("conformal factor is not strictly positive")]
    NotPositive,
}

pub type Result<T> = std::result::Result<T, Error>;
