//! Chunk-level speaker-confusion (SC) metrics for target speech extraction,
//! SC-aware SI-SDR training objectives with analytic gradients, and a small
//! differentiable extractor for exercising those objectives end to end.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: waveforms, chunk segmentation and chunk activity.
//! - [`wav`]: mono PCM WAV input and float WAV output.
//! - [`metrics`]: SI-SDR, SI-SDR improvement, chunkwise SC statistics.
//! - [`losses`]: plain, scaled and weighted SI-SDR losses plus a
//!   finite-difference gradient checker.
//! - [`toy`]: synthetic two-speaker mixtures, a masking extractor and the
//!   two-stage training / loss comparison harness.
//!
//! All signal processing runs in `f64`.

pub mod error;
pub mod losses;
pub mod metrics;
pub mod signal;
pub mod toy;
pub mod wav;

pub use error::{Error, Result};
pub use losses::{
    gradient_check, loss_scale_sisdr, loss_sisdr, loss_weight_sisdr, GradCheck, LossKind,
    LossResult, LossSettings, ScaleLossConfig, WeightLossConfig, WeightMode,
};
pub use metrics::{
    chunkwise_sisdri, distribution_report, sc_statistics, si_sdr, si_sdr_improvement, BinEdges,
    ChunkReference, Distribution, ScStatistics, SiSdrConfig,
};
pub use signal::{
    chunk_energy_db, is_active, make_chunks, make_chunks_samples, ActivityConfig, ChunkIndex,
    ChunkingConfig, ChunkingMode, Waveform,
};
