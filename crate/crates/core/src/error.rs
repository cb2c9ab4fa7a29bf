use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Fewer than two classes.
    TooFewClasses(usize),
    LabelOutOfRange {
        label: usize,
        num_classes: usize,
    },
    DuplicateObservation {
        worker: String,
        item: String,
    },
    UnknownIndex {
        what: &'static str,
        index: usize,
        len: usize,
    },
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// The centered regularizer is only defined for dense (multiclass) worker matrices.
    CenteredInOrdinalMode,
    EmptyDataset,
    /// No gold item has a prediction to score.
    NothingToScore,
    InvalidHyperParams(&'static str),
    InvalidConfig(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::TooFewClasses(k) => write!(f, "need at least 2 classes, got {k}"),
            Error::LabelOutOfRange { label, num_classes } => {
                write!(f, "label {label} out of range (valid labels are 0..{})", num_classes - 1)
            }
            Error::DuplicateObservation { worker, item } => {
                write!(f, "duplicate observation for worker {worker:?} on item {item:?}")
            }
            Error::UnknownIndex { what, index, len } => {
                write!(f, "{what} index {index} out of range (len {len})")
            }
            Error::DimensionMismatch { what, expected, found } => {
                write!(f, "{what}: expected {expected}, found {found}")
            }
            Error::CenteredInOrdinalMode => {
                write!(f, "the centered regularizer applies to multiclass mode only")
            }
            Error::EmptyDataset => write!(f, "dataset has no observations"),
            Error::NothingToScore => write!(f, "no gold item has a prediction"),
            Error::InvalidHyperParams(msg) => write!(f, "invalid hyperparameters: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
