//! Crate-wide error type.

use std::fmt;

use crate::trainer::TrainState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What went wrong while decoding one of the binary artifact formats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormatErrorKind {
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    UnsupportedVersion { found: u16, supported: u16 },
    /// The stream ended early; `needed` is the offset the current field would have ended at.
    Truncated { needed: u64 },
    ChecksumMismatch { stored: u32, computed: u32 },
    TrailingBytes,
    InvalidValue(String),
}

impl fmt::Display for FormatErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadMagic { expected, found } => write!(
                f,
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(expected)
            ),
            Self::UnsupportedVersion { found, supported } => {
                write!(f, "unsupported version {found} (supported: {supported})")
            }
            Self::Truncated { needed } => write!(f, "truncated, field needed bytes up to {needed}"),
            Self::ChecksumMismatch { stored, computed } => {
                write!(f, "CRC32 mismatch: stored {stored:#010x}, computed {computed:#010x}")
            }
            Self::TrailingBytes => write!(f, "unexpected trailing bytes after checksum"),
            Self::InvalidValue(msg) => write!(f, "{msg}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: &'static str },

    #[error("training diverged at step {step}: {reason}")]
    Diverged {
        step: u64,
        reason: String,
        /// Last state whose loss was finite.
        state: Box<TrainState>,
    },

    #[error("profession {profession:?} has no {gender} samples")]
    MissingGender {
        profession: String,
        gender: &'static str,
    },

    #[error("degenerate job latent: every activation is zero")]
    DegenerateJobLatent,

    #[error("direction bank was built from checkpoint {bank}, but checkpoint {checkpoint} was supplied")]
    FingerprintMismatch { bank: String, checkpoint: String },

    #[error("feature file holds {found} positions but strategy {strategy} needs {expected}")]
    PositionKindMismatch {
        strategy: &'static str,
        expected: &'static str,
        found: &'static str,
    },

    #[error("{file}: format error at byte {offset}: {kind}")]
    Format {
        file: &'static str,
        offset: u64,
        kind: FormatErrorKind,
    },

    #[error("predictions row {row}: {message}")]
    InvalidPrediction { row: u64, message: String },

    #[error("no {0} prompt records")]
    EmptySubset(&'static str),

    #[error("expected {expected} neutral records per profession; offenders: {}", format_offenders(.offenders))]
    SkewCountMismatch {
        expected: usize,
        offenders: Vec<(String, usize)>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_offenders(offenders: &[(String, usize)]) -> String {
    offenders
        .iter()
        .map(|(name, n)| format!("{name} ({n})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    /// True for failures caused by the environment rather than by the inputs' content.
    pub fn is_io(&self) -> bool {
        match self {
            Self::Io(_) => true,
            Self::Csv(e) => e.is_io_error(),
            Self::Json(e) => e.is_io(),
            _ => false,
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
