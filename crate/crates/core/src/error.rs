use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("chunk length {chunk_len} exceeds signal length {signal_len}")]
    ChunkLenExceedsSignal { chunk_len: usize, signal_len: usize },

    #[error("invalid hop: {0}")]
    InvalidHop(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {left} vs {right} samples")]
    LengthMismatch { left: usize, right: usize },

    #[error("target signal has (near) zero energy")]
    ZeroTarget,

    #[error("empty signal")]
    EmptySignal,

    #[error("signal contains non-finite samples")]
    NonFinite,

    #[error("no valid (speech-active) chunks")]
    NoValidChunks,

    #[error("empty input")]
    EmptyInput,

    #[error("speakers must differ (both have id {0})")]
    SameSpeaker(u32),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    DivergenceDetected { epoch: usize },

    #[error("unsupported WAV input: {0}")]
    UnsupportedWav(String),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
