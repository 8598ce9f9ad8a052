//! Sequence-to-sequence editing model: encode a retrieved prototype assertion
//! together with the edit script that separates the two focal tests, then
//! decode an adapted assertion with a three-way mixture over the base
//! vocabulary, tokens copied from the prototype, and tokens copied from the
//! query side of the edit script.

pub mod checkpoint;
pub mod decoder;
pub mod embeddings;
pub mod encoder;
pub mod generate;
pub mod input;
pub mod params;
pub mod trainer;
pub mod vocab;

use std::path::PathBuf;

use thiserror::Error;

use crate::num::NumError;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use decoder::{decode_step, init_state, DecState, GateOverride, StepOut};
pub use embeddings::load_pretrained;
pub use encoder::{encode, EncoderOut};
pub use generate::{generate, GenConfig, Generated};
pub use input::{build_input, encode_target, ExtVocab, ModelInput, TargetEncoding};
pub use params::{ModelDims, ModelParams, ParamVars};
pub use trainer::{
    build_pairs, perplexity, train, EpochStats, TrainConfig, TrainReport, Trainer, TrainingPair,
};
pub use vocab::{Vocab, EMPTY, EOS, PAD, SOS, SPECIALS, UNK};

/// Errors from model construction, training, and persistence.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Retrieval(#[from] crate::retrieval::RetrievalError),
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid model configuration: {message}")]
    Config { message: String },
    #[error("{path}: not a model checkpoint (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: corrupt checkpoint: {message}")]
    CorruptCheckpoint { path: PathBuf, message: String },
    #[error("{path}:{line}: bad embedding row: {message}")]
    Pretrained {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("no training pairs could be built")]
    NoPairs,
}
