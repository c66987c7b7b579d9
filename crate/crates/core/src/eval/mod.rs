//! Retrieval and answer metrics, exhaustive retrieval, RAG generation and
//! hybrid judgment construction.

mod answers;
mod hybrid;
mod metrics;
mod rag;
mod retrieve;

pub use answers::{
    answer_em_f1, normalize_answer, normalize_for_rouge, rouge_l, rouge_l_max, rouge_l_with_beta, ROUGE_BETA,
};
pub use hybrid::{build_hybrid_qrels, HybridOutcome, HYBRID_POOL_DEPTH};
pub use metrics::{
    evaluate_metric, evaluate_run, mrr_at_k, ndcg_at_k, parse_metric_list, recall_at_k, MetricKind, MetricReport,
    MetricSpec,
};
pub use rag::{answer_metrics, generate_all, rag_generate, GenerationConfig, GenerationRecord};
pub use retrieve::retrieve_full;

use crate::annotator::TemplateError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("collection is empty")]
    EmptyCollection,
    #[error("query {query_id}: run has {have} entries, need {need}")]
    RunTooShort { query_id: String, have: usize, need: usize },
    #[error("document {0} is not in the collection")]
    MissingDocument(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{0}")]
    InvalidParameter(String),
}
