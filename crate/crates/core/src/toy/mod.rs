//! Desk-scale extraction harness: synthetic speakers, a conditioned masking
//! extractor and its training loop.

pub mod data;
pub mod model;
pub mod train;

pub use data::{gen_example, Corpus, CorpusConfig, MixtureExample, SynthConfig, SyntheticSpeaker};
pub use model::{forward, ModelDims, ToyExtractorParams};
pub use train::{
    backward, compare_losses, parameter_gradient_check, train, train_with_observer, CompareRow,
    Comparison, EpochRecord, PreparedExample, Stage, TrainConfig, TrainOutcome, TrainState,
};
