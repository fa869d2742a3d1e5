//! Templated minimal-pair paradigms and grammatical augmentation sentences.
//!
//! A [`ConstructionTemplate`] lists one segment sequence per condition
//! triple; segments are literal tokens or `{slot}` references into a
//! [`Lexicon`]. Binding a template to a lexicon yields [`ParadigmItem`]s,
//! each expanded into one [`ConditionSentence`] per condition.

mod builtin;
mod lexicon;
mod paradigm;
mod template;

use std::path::PathBuf;

pub use builtin::{builtin_augmentation_lexicon, builtin_lexicon, builtin_template, default_item_count};
pub use lexicon::{load_lexicon, parse_lexicon, Lexicon, LexiconSlot, SlotRole};
pub use paradigm::{
    bind_lexicon, generate_paradigm, generate_training_sentences, read_items_jsonl, validate_lexicon,
    write_items_jsonl, Binding, ConditionSentence, LexiconReport, ParadigmItem, TrainingSentence,
    FUNCTION_WORDS,
};
pub use template::{load_templates, parse_templates, ConstructionTemplate, Segment, Variant};

use crate::condition::{Condition, Construction};

#[derive(Debug, thiserror::Error)]
pub enum StimgenError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{construction} template, variant {}: {rule}", .condition.map(|c| c.to_string()).unwrap_or_else(|| "-".into()))]
    Invariant {
        construction: Construction,
        condition: Option<Condition>,
        rule: String,
    },
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
    #[error("template references slot `{0}` that the lexicon does not provide")]
    MissingSlot(String),
    #[error("requested {requested} distinct bindings but the lexicon only supports {max}")]
    InsufficientLexicon { requested: usize, max: u128 },
    #[error("augmentation size must be even, got {0}")]
    OddCount(usize),
    #[error("augmentation lexicon shares words with the test lexicon: {}", .words.join(", "))]
    LexiconOverlap { words: Vec<String> },
}

pub type Result<T> = std::result::Result<T, StimgenError>;
