//! Word-level LSTM language model written from scratch: initialization,
//! forward pass, truncated backpropagation through time, SGD training with
//! validation-based annealing, perplexity and per-token surprisal.
//!
//! Parameters are generic over the float type. Training and inference use
//! `f32`; the finite-difference gradient check runs in `f64`.

mod checkpoint;
mod config;
mod eval;
mod gradcheck;
mod lstm;
mod params;
mod train;

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::LmConfig;
pub use eval::{evaluate_perplexity, sequence_nll, sequence_surprisal, stream_nll, unigram_perplexity};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use lstm::{forward_step, forward_window, loss_and_grad, Dropout, LstmState};
pub use params::{LmParameters, LstmLayer, TensorRef};
pub use train::{train, EpochRecord, TrainingLog};

/// Scalar type the model can run in.
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl Float for f32 {}
impl Float for f64 {}

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("token `{0}` is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("cannot evaluate an empty token stream")]
    EmptySplit,
    #[error("gradient check requires {0}")]
    GradCheckPrecondition(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, LmError>;
