use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{count} {what} cannot be split into {parts} equal parts")]
    Divisibility {
        what: &'static str,
        count: usize,
        parts: usize,
    },

    #[error("computation load {load} out of range for {cols} columns")]
    LoadOutOfRange { load: usize, cols: usize },

    #[error("order {order} out of range for load {load}")]
    OrderOutOfRange { order: usize, load: usize },

    #[error("row {row} has weight {got}, expected {expected}")]
    NonuniformRowWeight {
        row: usize,
        got: usize,
        expected: usize,
    },

    #[error("column {0} of the support matrix is all zero; batch is uncomputable")]
    AllZeroColumn(usize),

    #[error("row {0} of the support matrix is all zero")]
    AllZeroRow(usize),

    #[error("schedule design does not match the support matrix: {0}")]
    DesignMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("straggler pattern leaves cluster {cluster} undecodable")]
    InfeasiblePattern { cluster: usize },

    #[error("schemes disagree on shared parameters: {0}")]
    MismatchedSharedParams(String),

    #[error("batch {batch} out of range (have {batches})")]
    BatchOutOfRange { batch: usize, batches: usize },

    #[error("loss increased for more than {streak} consecutive steps (step {step}); decode path is suspect")]
    Divergence { step: usize, streak: usize },

    #[error("no schemes configured")]
    NoSchemes,

    #[error("duplicate scheme name {0:?}")]
    DuplicateSchemeName(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("failed to parse config: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
