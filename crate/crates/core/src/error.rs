use thiserror::Error;

use crate::expr::{EvalError, ParseError};
use crate::multiindex::MultiIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("integer overflow computing binomial C({n}, {k})")]
    Overflow { n: i64, k: i64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("operator is not Hermitian (violated coefficient slots: {})", format_slots(.slots))]
    NotHermitian { slots: Vec<MultiIndex> },

    #[error("grid resolution too low: {0}")]
    Resolution(String),

    #[error("time step {dt} is unstable: spectral radius estimate {radius:.3e} gives dt*radius = {product:.3e} > {bound}")]
    Unstable {
        dt: f64,
        radius: f64,
        product: f64,
        bound: f64,
    },

    #[error("norm drift {drift:.3e} at t = {t} exceeds {limit:.1e}")]
    NormDrift { drift: f64, t: f64, limit: f64 },

    #[error("guidance velocity undefined near a node of the wavefunction at {point:?} (density {density:.3e})")]
    Node { point: Vec<f64>, density: f64 },

    #[error("Poisson source has nonzero mean {mean:.3e} (scale {scale:.3e}); no periodic solution exists")]
    NonzeroMean { mean: f64, scale: f64 },

    #[error("imaginary residue {residue:.3e} of current component {axis} exceeds threshold {threshold:.3e}")]
    ImaginaryResidue {
        axis: usize,
        residue: f64,
        threshold: f64,
    },

    #[error("all {count} trajectories were truncated at nodes")]
    AllTruncated { count: usize },

    #[error("method not applicable: {0}")]
    Inapplicable(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    /// True for malformed input (files, expressions, literals) as opposed to
    /// numerical or domain failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse(_) | Error::Format { .. } | Error::DimensionMismatch { .. }
        )
    }
}

fn format_slots(slots: &[MultiIndex]) -> String {
    slots
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
