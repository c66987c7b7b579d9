//! On-disk formats for collections, queries, relevance judgments, ranked runs
//! and annotation records.
//!
//! | artifact    | format                                             |
//! |-------------|----------------------------------------------------|
//! | collection  | `doc_id<TAB>text` per line                         |
//! | queries     | `query_id<TAB>text` per line                       |
//! | answers     | JSON Lines `{"query_id": .., "answers": [..]}`     |
//! | qrels       | `query_id 0 doc_id grade` (TREC)                   |
//! | runs        | `query_id Q0 doc_id rank score tag` (TREC)         |
//! | annotations | JSON Lines of [`AnnotationRecord`]                 |
//!
//! Text is read as UTF-8 and never normalized here.

mod annotations;
mod collection;
mod io;
mod qrels;
mod queries;
mod run;

pub use annotations::{read_annotations, utility_rank_cutoff, write_annotations, AnnotationMethod, AnnotationRecord};
pub use collection::{load_collection, write_collection, Collection, Document};
pub use io::{read_jsonl, read_to_string, write_atomic, write_jsonl};
pub use qrels::{load_qrels, write_qrels, RelevanceJudgments};
pub use queries::{load_answers, load_queries, write_answers, write_queries, Query, QuerySet};
pub use run::{read_run, write_run, Run, RunEntry};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: annotation for query {query_id} is invalid: {message}")]
    Validation {
        path: PathBuf,
        query_id: String,
        message: String,
    },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CorpusError>;
