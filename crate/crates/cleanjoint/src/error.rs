//! Error types shared across the crate.

use std::fmt;

/// Validation and estimation errors.
///
/// Everything here is a data problem: shapes that do not agree, labels
/// outside the class range, degenerate distributions. I/O and parse
/// failures live in [`crate::io::IoError`].
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Row count of the probability matrix and label count disagree.
    DimensionMismatch { rows: usize, labels: usize },
    /// A label is >= the number of classes.
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    /// No example carries the given class label.
    EmptyClass { class: usize },
    /// A probability entry is NaN or infinite.
    NonFiniteEntry { row: usize, col: usize },
    /// A probability entry falls outside [0, 1] in strict mode.
    OutOfRangeEntry { row: usize, col: usize, value: f64 },
    /// A matrix or vector fails a stochasticity check (sums, signs).
    NotStochastic { detail: String },
    /// A latent class prior entry is zero, so conditionals are undefined.
    DegenerateClass { class: usize },
    /// A diagonal entry of the joint is zero, so class weights are undefined.
    ZeroDiagonal { class: usize },
    /// The requested noise matrix cannot exist or was not found after
    /// the retry budget.
    InfeasibleSpec { detail: String },
    /// A per-example diffraction range collapsed to a point (threshold
    /// equals the ideal probability).
    DegenerateRange { class: usize },
    /// Two matrices that must share a shape do not.
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    /// An example index is outside the dataset.
    IndexOutOfRange { index: usize, len: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { rows, labels } => write!(
                f,
                "dimension mismatch: probability matrix has {rows} rows but {labels} labels given"
            ),
            Error::LabelOutOfRange {
                index,
                label,
                classes,
            } => write!(
                f,
                "label {label} at index {index} is out of range for {classes} classes"
            ),
            Error::EmptyClass { class } => {
                write!(f, "class {class} has no examples")
            }
            Error::NonFiniteEntry { row, col } => {
                write!(f, "non-finite probability at row {row}, column {col}")
            }
            Error::OutOfRangeEntry { row, col, value } => write!(
                f,
                "probability {value} at row {row}, column {col} is outside [0, 1] \
                 (use the unnormalized mode to allow this)"
            ),
            Error::NotStochastic { detail } => write!(f, "not stochastic: {detail}"),
            Error::DegenerateClass { class } => {
                write!(f, "latent prior of class {class} is zero")
            }
            Error::ZeroDiagonal { class } => {
                write!(f, "joint diagonal entry for class {class} is zero")
            }
            Error::InfeasibleSpec { detail } => write!(f, "infeasible noise spec: {detail}"),
            Error::DegenerateRange { class } => write!(
                f,
                "diffraction range for class {class} is empty (threshold equals ideal probability)"
            ),
            Error::ShapeMismatch { left, right } => {
                write!(f, "shape mismatch: {:?} vs {:?}", left, right)
            }
            Error::IndexOutOfRange { index, len } => {
                write!(f, "example index {index} out of range for {len} examples")
            }
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
