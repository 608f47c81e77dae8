//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A conditional probability row is negative or does not sum to one.
    #[error("row for prefix `{prefix}` is not a distribution: {detail}")]
    Normalization { prefix: String, detail: String },

    /// A conditional table does not cover every prefix shorter than the depth.
    #[error("conditional table is missing prefix `{prefix}`")]
    IncompleteTable { prefix: String },

    /// A prefix or sequence is too long for the model's table.
    #[error("prefix/sequence of length {len} exceeds model depth {depth}")]
    DepthExceeded { len: usize, depth: usize },

    /// Two models (or distributions) disagree on the vocabulary size.
    #[error("vocabulary sizes differ: {left} vs {right}")]
    VocabMismatch { left: usize, right: usize },

    /// `[P - Q]_+` (or a lantern residual) is identically zero, so the
    /// residual cannot be normalized into a distribution.
    #[error("residual distribution is identically zero")]
    DegenerateResidual,

    /// Linear schedule with `ell <= L` would produce non-positive weights.
    #[error("linear schedule slope too steep: ell={ell} must exceed draft length {draft_len}")]
    SlopeTooSteep { ell: usize, draft_len: usize },

    /// Simplex brute force is only feasible for tiny vocabularies.
    #[error("vocabulary size {vocab} exceeds brute-force limit {max}")]
    VocabTooLarge { vocab: usize, max: usize },

    /// The reduced bound formula requires `min(1, P/Q) <= f <= 1` pointwise.
    #[error("acceptance premise violated: {0}")]
    PremiseViolated(String),

    /// An acceptance function fell below the vanilla rule somewhere.
    #[error("dominance violated at prefix `{prefix}`, token {token}: f={f} < f_van={f_van}")]
    DominanceViolated {
        prefix: String,
        token: u32,
        f: f64,
        f_van: f64,
    },

    /// A perturbation left the small-perturbation regime in which the
    /// additive analysis is meaningful.
    #[error("perturbation outside the admissible regime: {0}")]
    ClampViolation(String),

    /// The two perturbation arms disagree on the expected accepted length.
    #[error("expected accepted length mismatch between arms: {left} vs {right}")]
    ExpectationMismatch { left: f64, right: f64 },

    /// Two exact distributions live on different domains.
    #[error("distributions live on different domains")]
    DomainMismatch,

    /// Generic parameter validation failure.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Malformed or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("config error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
