use thiserror::Error;

/// Errors raised by estimator construction and sampling.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coupling requires a base stream with a known mean")]
    MissingKnownMean,

    #[error("epsilon must lie in (0, 1), got {0}")]
    EpsilonOutOfRange(f64),

    #[error("unsupported support: {0}")]
    UnsupportedSupport(String),

    #[error("truncation level {level} exceeds hard cap {cap}")]
    TruncationOverflow { level: u64, cap: u64 },

    #[error("truncation law {0} has zero survival mass beyond a finite level; the estimator would be biased")]
    DegenerateTruncation(String),

    #[error("stream lower bound {lower} does not match series anchor {anchor}")]
    AnchorMismatch { anchor: f64, lower: f64 },

    #[error("composition requires an outer series anchored at 0, got {0}")]
    ComposeAnchorNonzero(f64),

    #[error("inner factory produced a negative value {0}")]
    NegativeInner(f64),

    #[error("Bernstein coefficient b_{index} = {value} is outside [0, 1]")]
    CoefficientOutOfRange { index: usize, value: f64 },

    #[error("grid is empty or does not cover its interval")]
    EmptyGrid,

    #[error("likelihood estimator returned a negative value {value} at theta = {theta}")]
    NegativeEstimate { theta: f64, value: f64 },

    #[error("empty data")]
    EmptyData,

    #[error("importance weight {weight} left the declared bounds [{a}, {b}]")]
    BoundViolation { weight: f64, a: f64, b: f64 },

    #[error("invalid config at `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
