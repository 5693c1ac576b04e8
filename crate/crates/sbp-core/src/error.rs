use thiserror::Error;

/// Errors reported by the operator, solver and interface routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SbpError {
    #[error("grid too small: n = {n}, need at least {min}")]
    GridTooSmall { n: usize, min: usize },
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("operator variant {variant} requires a ghost value on the {side} side")]
    MissingGhost { variant: &'static str, side: &'static str },
    #[error("wrong operator variant: expected {expected}, got {got}")]
    WrongVariant {
        expected: &'static str,
        got: &'static str,
    },
    #[error("coefficient table parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("inconsistent coefficient table: {0}")]
    Inconsistent(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("penalty tau = {tau} is below the stability bound {bound}")]
    PenaltyTooSmall { tau: f64, bound: f64 },
    #[error("singular matrix: zero pivot in column {0}")]
    Singular(usize),
    #[error("iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("bisection bracket invalid: {0}")]
    Bracket(String),
    #[error("solution became unstable at t = {t}")]
    Unstable { t: f64 },
}

pub type Result<T> = std::result::Result<T, SbpError>;
