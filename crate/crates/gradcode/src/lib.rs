//! Gradient coding with multi-message communication.
//!
//! Workers hold overlapping slices of a dataset and stream linear
//! combinations of their finished partial gradients to a master, which
//! recovers the exact full gradient as soon as it holds enough distinct
//! coded messages. This crate builds the assignment matrices and
//! real-valued polynomial codes behind several such schemes (single-message
//! gradient coding, fractional repetition, uncoded multi-message,
//! correlated and uncorrelated multi-message designs, and a hybrid),
//! certifies their recovery thresholds, validates them end to end on
//! least-squares gradients, and replays iterations under a shifted
//! exponential straggler model to compare per-iteration completion time
//! against communication load.

pub mod assignment;
pub mod cli;
pub mod coding;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod runtime;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{
    IterationOutcome, MetricsSummary, SchemeConfig, SchemeKind, SupportMatrix, TrialRecord,
    ValidationReport, WorkerTimeline,
};
pub use simulator::{
    build_scheme, compare_schemes, run_experiment, run_iteration, SchemeInstance,
};
