//! Agreement between LLM positives and human judgments.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use crate::corpus::{AnnotationRecord, RelevanceJudgments};

/// Micro-averaged precision and recall of LLM positives against human
/// positives. `None` marks an undefined ratio (zero denominator).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationQuality {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub avg_positives: f64,
    pub queries: usize,
    pub llm_positives: usize,
    pub human_positives: usize,
    pub agreed: usize,
    /// Number of queries per LLM positive count.
    pub positive_count_histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("annotated query {0} has no human judgments")]
pub struct MissingJudgments(pub String);

pub fn annotation_quality(
    records: &[AnnotationRecord],
    qrels: &RelevanceJudgments,
) -> Result<AnnotationQuality, MissingJudgments> {
    let mut llm = 0usize;
    let mut human = 0usize;
    let mut agreed = 0usize;
    let mut histogram = BTreeMap::new();
    for r in records {
        if !qrels.contains_query(&r.query_id) {
            return Err(MissingJudgments(r.query_id.clone()));
        }
        let gold: HashSet<String> = qrels.positives(&r.query_id).into_iter().collect();
        llm += r.positive_ids.len();
        human += gold.len();
        agreed += r.positive_ids.iter().filter(|d| gold.contains(*d)).count();
        *histogram.entry(r.positive_ids.len()).or_insert(0) += 1;
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(AnnotationQuality {
        precision: ratio(agreed, llm),
        recall: ratio(agreed, human),
        avg_positives: if records.is_empty() {
            0.0
        } else {
            llm as f64 / records.len() as f64
        },
        queries: records.len(),
        llm_positives: llm,
        human_positives: human,
        agreed,
        positive_count_histogram: histogram,
    })
}
