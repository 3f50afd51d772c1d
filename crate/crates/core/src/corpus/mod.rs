//! Dataset formats, value alignment, the synthetic query generator and
//! seeded splits.

mod align;
mod annotations;
mod conll;
mod split;
mod synth;

pub use align::{align_values, AlignOutcome, Alignment, DropReason};
pub use annotations::{
    read_annotations, record_to_query, write_annotations, AnnotationRecord, CleanEntry, KindAliases, Pair, Source,
};
pub use conll::{read_conll, read_conll_open, write_conll};
pub use split::{split, SplitSpec};
pub use synth::{synth_corpus, Grammar, DEFAULT_GRAMMAR};

use thiserror::Error;

use crate::schema::SchemaError;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: expected 4 space-separated fields, found {found}")]
    MalformedRow { line: usize, found: usize },
    #[error("line {line}: invalid tag: {source}")]
    InvalidTag { line: usize, source: SchemaError },
    #[error("line {line}: malformed JSON: {message}")]
    MalformedJson { line: usize, message: String },
    #[error("grammar: lexicon for {0:?} is empty or missing")]
    EmptyLexicon(String),
    #[error("grammar line {line}: {message}")]
    Grammar { line: usize, message: String },
    #[error("split fractions must be non-negative and sum to 1 (got {0}, {1}, {2})")]
    BadFractions(f64, f64, f64),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
