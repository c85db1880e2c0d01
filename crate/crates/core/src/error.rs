use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is singular or numerically singular: {0}")]
    Singular(String),

    #[error("matrix is ill-conditioned (condition number {cond:.3e} exceeds {limit:.1e})")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("eigenvalue iteration did not converge for a {0}x{0} matrix")]
    EigenNonConvergence(usize),

    #[error("matrix exponential overflowed (norm of Λt = {0:.3e})")]
    ExpOverflow(f64),

    #[error("matrix is not Metzler (off-diagonal entry {value:.3e} at ({row}, {col}))")]
    NotMetzler { row: usize, col: usize, value: f64 },

    #[error("matrix is not Hurwitz (spectral abscissa {0:.6e})")]
    NotHurwitz(f64),

    #[error("matrix is not positive definite (smallest eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },

    #[error("bound evaluation failed: {0}")]
    Evaluation(String),

    #[error("grid too large: {points} points exceed the limit {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("affine cap violated at θ = {theta:?}: δ = {value:?} exceeds cap {cap:?}")]
    CapViolated {
        theta: Vec<f64>,
        value: Vec<f64>,
        cap: Vec<f64>,
    },

    #[error("fixed-point iteration diverged after {iterations} steps (component exceeded {cap:.3e})")]
    Divergence { iterations: usize, cap: f64 },

    #[error("fixed-point iteration stopped without strict decrease T0(β) ≺ β: {0}")]
    Degenerate(String),

    #[error("monotonicity violated at step {step}: component {component} increased from {before:.6e} to {after:.6e}")]
    NotMonotone {
        step: usize,
        component: usize,
        before: f64,
        after: f64,
    },

    #[error("fixed-point iteration did not converge within {0} steps")]
    NoConvergence(usize),

    #[error("spectral radius of R is {0:.6} ≥ 1")]
    SpectralRadius(f64),

    #[error("no feasible transform found: {0}")]
    NoFeasibleTransform(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("delay horizon τ̄ = {0} but this operation requires τ̄ = 0")]
    DelayNotSupported(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
