use thiserror::Error;

use crate::optimizer::SqpReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("inadmissible state: component {component} has value {value}")]
    Inadmissible { component: usize, value: f64 },

    #[error("Roe average undefined: {0}")]
    RoeAverage(String),

    #[error("inverted element {element}: mapping Jacobian {det}")]
    InvertedElement { element: usize, det: f64 },

    #[error("jump {jump:e} below tolerance {tol:e}; no shock speed defined")]
    DegenerateJump { jump: f64, tol: f64 },

    #[error("mesh untangling failed: worst element {element} has min det {min_det}")]
    UntanglingFailure { element: usize, min_det: f64 },

    #[error("unsupported reference element: degree {p} in dimension {d}")]
    UnsupportedElement { p: usize, d: usize },

    #[error("unknown DIRK scheme `{0}`")]
    UnknownScheme(String),

    #[error("singular matrix in linear solve (pivot {pivot} at row {row})")]
    SingularMatrix { row: usize, pivot: f64 },

    #[error("SQP step failed: {0}")]
    StepFailure(String),

    #[error("stage {stage} of step {step} did not converge after {} iterations", report.iterations)]
    StageFailure {
        step: usize,
        stage: usize,
        report: Box<SqpReport>,
    },

    #[error("tableau inconsistency: stiffly accurate update differs by {0:e}")]
    TableauInconsistency(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("setup error: {0}")]
    Setup(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
