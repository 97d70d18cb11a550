use thiserror::Error;

use crate::expr::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("U must be C²: '{0}' is not allowed in a compact function")]
    NotC2(&'static str),
    #[error("stationary solution is not unique: {components} closed communicating classes")]
    NonUnique { components: usize },
    #[error("positivity failure: value {value:e} at node {node}")]
    Positivity { node: usize, value: f64 },
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error("non-positive total mass {0:e}")]
    NonPositiveMass(f64),
    #[error("irregular level {rho}: |grad U| = {grad:e} at {point:?}")]
    IrregularLevel {
        rho: f64,
        point: Vec<f64>,
        grad: f64,
    },
    #[error("classification mismatch: {check} requires {required}, problem classified as {found}")]
    ClassificationMismatch {
        check: String,
        required: String,
        found: String,
    },
    #[error("density file: {0}")]
    DensityFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
