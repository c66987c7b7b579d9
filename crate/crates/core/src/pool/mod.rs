//! Candidate pools of human positives plus hard negatives, and per-epoch
//! sampling of fixed-size training instances from them.

mod sampling;

pub use sampling::{
    apply_inclusion_mode, average_positive_count, human_label_view, sample_instance, InclusionMode,
    InstanceSampler, LabelView, PosStrategy, SampleError, SamplingConfig, SkipReport, TrainingInstance,
};

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, write_jsonl, CorpusError, RelevanceJudgments, Run};

#[derive(Debug, thiserror::Error)]
pub enum PoolError {
    #[error("query {query_id}: pool underfull ({available} available, {requested} requested)")]
    Underfull {
        query_id: String,
        available: usize,
        requested: usize,
    },
    #[error("query {0} is not covered by any source run")]
    QueryNotInRuns(String),
    #[error("invalid pool parameter: {0}")]
    InvalidParameter(String),
    #[error("query {query_id}: {count} human positives exceed the {m} positive slots under Inclusion")]
    InclusionOverflow { query_id: String, count: usize, m: usize },
    #[error("label record for {record} does not belong to pool {pool}")]
    QueryMismatch { pool: String, record: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Human positives and hard negatives for one query, awaiting annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub query_id: String,
    #[serde(rename = "positives")]
    pub human_positive_ids: Vec<String>,
    #[serde(rename = "negatives")]
    pub hard_negative_ids: Vec<String>,
    #[serde(rename = "sources")]
    pub source_tags: BTreeMap<String, String>,
}

impl CandidatePool {
    /// Every document of the pool: human positives first, then negatives.
    pub fn candidate_ids(&self) -> Vec<String> {
        self.human_positive_ids
            .iter()
            .chain(&self.hard_negative_ids)
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.human_positive_ids.len() + self.hard_negative_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub const HUMAN_SOURCE_TAG: &str = "qrels";

/// Round-robin merge of the top-`depth` lists, keeping the first occurrence of
/// every document. Returns `(doc_id, run_tag)` pairs in merge order.
pub fn round_robin_merge(query_id: &str, runs: &[&Run], depth: usize) -> Vec<(String, String)> {
    let lists: Vec<(Vec<&str>, &str)> = runs
        .iter()
        .map(|r| (r.top(query_id, depth), r.tag.as_str()))
        .collect();
    let longest = lists.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let mut seen = HashSet::new();
    let mut merged = Vec::new();
    for rank in 0..longest {
        for (list, tag) in &lists {
            if let Some(&doc) = list.get(rank) {
                if seen.insert(doc) {
                    merged.push((doc.to_string(), tag.to_string()));
                }
            }
        }
    }
    merged
}

/// Builds a pool of all human positives plus the first `n` non-positive
/// documents of the round-robin merge over `source_runs`.
pub fn build_pool(
    query_id: &str,
    source_runs: &[&Run],
    qrels: &RelevanceJudgments,
    n: usize,
    depth: usize,
) -> Result<CandidatePool, PoolError> {
    if n == 0 {
        return Err(PoolError::InvalidParameter("n must be at least 1".into()));
    }
    if !source_runs.iter().any(|r| r.contains_query(query_id)) {
        return Err(PoolError::QueryNotInRuns(query_id.to_string()));
    }
    let human_positive_ids = qrels.positives(query_id);
    let mut source_tags: BTreeMap<String, String> = human_positive_ids
        .iter()
        .map(|d| (d.clone(), HUMAN_SOURCE_TAG.to_string()))
        .collect();
    let negatives: Vec<(String, String)> = round_robin_merge(query_id, source_runs, depth)
        .into_iter()
        .filter(|(d, _)| !qrels.is_relevant(query_id, d))
        .collect();
    if negatives.len() < n {
        return Err(PoolError::Underfull {
            query_id: query_id.to_string(),
            available: negatives.len(),
            requested: n,
        });
    }
    let mut hard_negative_ids = Vec::with_capacity(n);
    for (doc, tag) in negatives.into_iter().take(n) {
        source_tags.insert(doc.clone(), tag);
        hard_negative_ids.push(doc);
    }
    Ok(CandidatePool {
        query_id: query_id.to_string(),
        human_positive_ids,
        hard_negative_ids,
        source_tags,
    })
}

pub fn read_pools(path: &Path) -> Result<Vec<CandidatePool>, PoolError> {
    Ok(read_jsonl(path)?)
}

pub fn write_pools(pools: &[CandidatePool], path: &Path) -> Result<(), PoolError> {
    Ok(write_jsonl(path, pools)?)
}
