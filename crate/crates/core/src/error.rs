use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("unknown set family '{0}'")]
    UnknownFamily(String),

    #[error("invalid set specification: {0}")]
    InvalidSpec(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("point {0:?} is not in the jet carrier")]
    NotInCarrier(Vec<f64>),

    #[error("evaluation point {0:?} is not covered by the decomposition (inside the resolution collar, in K, or outside the domain)")]
    NotCovered(Vec<f64>),

    #[error("domain does not contain the compact set with room to spare")]
    DomainTooSmall,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("derivative order {requested} exceeds the supported maximum {max}")]
    OrderTooHigh { requested: u32, max: u32 },

    #[error("regression is underdetermined: {0} ladder value(s)")]
    UnderdeterminedFit(usize),

    #[error("derivative oracle failed: {0}")]
    Oracle(String),

    #[error("moment problem infeasible: {0}")]
    Infeasible(String),

    #[error("linear program failed: {0}")]
    Lp(#[from] crate::lp::LpError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
