use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("frame is singular at node ({i}, {j}) = ({x}, {y}): |det A| = {det:e} below floor {floor:e}")]
    FrameSingular {
        i: usize,
        j: usize,
        x: f64,
        y: f64,
        det: f64,
        floor: f64,
    },

    #[error("exponent p = {p} at ({x}, {y}) is below the minimum {min}")]
    ExponentBelowMinimum { x: f64, y: f64, p: f64, min: f64 },

    #[error("non-finite value in {what} at ({x}, {y})")]
    NonFinite { what: String, x: f64, y: f64 },

    #[error("nonpositive weight {w} at ({x}, {y})")]
    NonPositiveWeight { x: f64, y: f64, w: f64 },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("nonlinear iteration at k = {k} did not converge after {iterations} iterations (last update {last_update:e})")]
    NonlinearNotConverged {
        k: f64,
        iterations: usize,
        last_update: f64,
        history: Vec<f64>,
    },

    #[error("weight exponent overflow at k = {k}: log-weight {log_weight} outside [-700, 700]")]
    WeightOverflow { k: f64, log_weight: f64 },

    #[error("solve failed at k = {k}: {source}")]
    AtK {
        k: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("config `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("malformed field file, line {line}: {msg}")]
    FieldFormat { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
