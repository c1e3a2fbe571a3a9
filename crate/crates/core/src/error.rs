use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

use crate::checkpoints::Checkpoint;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or parameter block did not have the expected length.
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A value outside its admissible domain (probability, mixing weight, step index...).
    OutOfRange { what: &'static str, value: f64 },
    /// A NaN or infinity showed up where only finite numbers are allowed.
    NonFinite { what: String },
    /// Two tables or models were built against different datasets.
    FingerprintMismatch { expected: u64, got: u64 },
    /// A configuration rejected before any work was done.
    InvalidConfig(String),
    /// A run needs an artifact that was not supplied (e.g. the student SFT reference for AW).
    MissingArtifact(&'static str),
    /// Training produced a non-finite loss. The last checkpoint captured before the
    /// failure is retained when there is one.
    Diverged {
        step: usize,
        last_good: Option<Box<Checkpoint>>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { what, expected, got } => {
                write!(f, "shape mismatch for {what}: expected {expected}, got {got}")
            }
            Error::OutOfRange { what, value } => write!(f, "{what} out of range: {value}"),
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::FingerprintMismatch { expected, got } => write!(
                f,
                "dataset fingerprint mismatch: expected {expected:016x}, got {got:016x}"
            ),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::MissingArtifact(what) => write!(f, "missing required artifact: {what}"),
            Error::Diverged { step, last_good } => {
                write!(f, "training diverged at step {step}")?;
                if let Some(ckpt) = last_good {
                    write!(f, " (last good checkpoint: id {} at step {})", ckpt.id, ckpt.step)?;
                }
                Ok(())
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { what, expected, got })
    }
}
