//! Tokenization, vocabularies, synthetic corpora, augmentation and batching.

mod batch;
mod grammar;
mod split;
mod tokenize;
mod vocab;

use std::path::PathBuf;

pub use batch::{batchify, Batch, BatchPlan};
pub use grammar::{
    builtin_grammar, load_grammar, synth_corpus, Alternative, ConstructionSetting, DependencyMode, GrammarConfig,
};
pub use split::{augment_corpus, CorpusSplit, EncodedCorpus, Sentence};
pub use tokenize::{detokenize, tokenize};
pub use vocab::{Vocab, EOS_TOKEN, UNK_TOKEN};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary size must be at least 2, got {0}")]
    VocabTooSmall(usize),
    #[error("invalid vocabulary file: {0}")]
    BadVocab(String),
    #[error("invalid grammar config: {0}")]
    InvalidGrammar(String),
    #[error("corpus split `{0}` would be empty")]
    EmptySplit(&'static str),
    #[error("stream of {len} tokens is too short for batch size {batch_size} (need at least {need})")]
    StreamTooShort { len: usize, batch_size: usize, need: usize },
    #[error("batch size and bptt length must be >= 1")]
    BadBatchPlan,
}

pub type Result<T> = std::result::Result<T, CorpusError>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}
