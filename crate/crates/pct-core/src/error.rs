//! Error type shared across the core modules.

use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the core algorithms.
///
/// Every variant corresponds to a violated precondition or a numerical
/// failure; none of them are recoverable mid-operation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An operation received an empty input where at least one element is required.
    EmptyInput(&'static str),
    /// Vector or matrix dimensions do not agree.
    DimensionMismatch { context: &'static str, expected: usize, got: usize },
    /// Too few samples for the requested estimator.
    InsufficientSamples { required: usize, got: usize },
    /// A matrix was not positive semidefinite even after jitter escalation.
    NotPositiveSemiDefinite,
    /// A scalar parameter was outside its legal range.
    InvalidParameter { name: &'static str, reason: &'static str },
    /// Class centers could not be placed at the requested separation.
    CenterPlacementFailed { attempts: usize },
    /// A split would leave some class with zero samples.
    EmptyClassInSplit { class: usize },
    /// A class label was outside `[0, num_classes)`.
    LabelOutOfRange { label: usize, num_classes: usize },
    /// Prediction sets or datasets do not cover the same sample ids in the same order.
    MisalignedIds,
    /// An offline teacher cache has no entry for the requested sample.
    CacheMiss { id: usize },
    /// The configured objective needs a reference model that was not supplied.
    MissingReference(&'static str),
    /// A model pool is too small for the requested draw.
    PoolTooSmall { required: usize, got: usize },
    /// Training produced a non-finite loss.
    NonFiniteLoss { epoch: usize, batch: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::DimensionMismatch { context, expected, got } => {
                write!(f, "dimension mismatch in {context}: expected {expected}, got {got}")
            }
            Error::InsufficientSamples { required, got } => {
                write!(f, "need at least {required} samples, got {got}")
            }
            Error::NotPositiveSemiDefinite => {
                write!(f, "matrix is not positive semidefinite after jitter escalation")
            }
            Error::InvalidParameter { name, reason } => {
                write!(f, "invalid parameter `{name}`: {reason}")
            }
            Error::CenterPlacementFailed { attempts } => {
                write!(f, "failed to place class centers at the requested separation after {attempts} attempts")
            }
            Error::EmptyClassInSplit { class } => {
                write!(f, "class {class} would receive zero samples under this split")
            }
            Error::LabelOutOfRange { label, num_classes } => {
                write!(f, "label {label} out of range for {num_classes} classes")
            }
            Error::MisalignedIds => write!(f, "sample ids are not aligned"),
            Error::CacheMiss { id } => write!(f, "offline logit cache has no entry for sample {id}"),
            Error::MissingReference(what) => write!(f, "objective requires a reference: {what}"),
            Error::PoolTooSmall { required, got } => {
                write!(f, "model pool too small: need {required}, have {got}")
            }
            Error::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
