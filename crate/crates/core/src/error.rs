use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("evaluation at the singular point (origin)")]
    Singular,

    #[error("axis closure violated at t = {t}: u_r = {ur:e}")]
    AxisClosure { t: f64, ur: f64 },

    #[error("non-finite sample {value} at node (s = {s}, phi = {phi})")]
    NonFinite { s: f64, phi: f64, value: f64 },

    #[error("grid functions live on different grids")]
    GridMismatch,

    #[error("truncation order {0} exceeds 64; tolerance tighter than double precision supports")]
    TruncationTooLarge(usize),

    #[error("singular Gram system")]
    SingularGram,

    #[error("degenerate direction set (Gram determinant ratio {0:e})")]
    DegenerateDirections(f64),

    #[error("newton iteration failed: {reason}")]
    NewtonFailed { reason: String, history: Vec<f64> },

    #[error("eigensolver did not converge: max residual {residual:e} after {iterations} vectors")]
    EigenFailed { residual: f64, iterations: usize },

    #[error("empty distribution function")]
    EmptyDistribution,
}

pub type Result<T> = std::result::Result<T, Error>;
