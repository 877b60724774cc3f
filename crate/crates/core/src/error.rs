use thiserror::Error;

/// Errors raised by the declipping library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },

    #[error("clip level must be positive and finite, got {0}")]
    InvalidTau(f64),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("no clipped samples: the clipped-index SDR is undefined")]
    EmptyClippedSet,

    #[error("reference has zero energy on the clipped indices")]
    SilentReference,

    #[error("target SDR {target:.3} dB is unattainable; attainable range is ({low:.3} dB, +inf)")]
    UnattainableSdr { target: f64, low: f64 },

    #[error("unsupported frame: {0}")]
    UnsupportedFrame(String),

    #[error("invalid chunk plan: {0}")]
    InvalidPlan(String),

    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),

    #[error("coefficient vector is not conjugate-symmetric (imaginary residue {0:e})")]
    ImaginaryResidue(f64),

    #[error("solver produced a non-finite iterate at iteration {iteration}")]
    Blowup { iteration: usize },

    #[error("chunk {index}: {source}")]
    Chunk {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("unsupported audio: {0}")]
    UnsupportedAudio(String),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
