//! Generator-side utility targets for REPLUG-KL.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::losses::{candidate_distribution, LossError};
use super::train::UtilityTable;
use crate::annotator::{BackendError, LlmBackend};
use crate::corpus::{Collection, Document, Query};
use crate::pool::CandidatePool;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityDistribution {
    pub doc_ids: Vec<String>,
    /// Mean per-token log-likelihood of the answer given each passage.
    pub scores: Vec<f64>,
    /// `softmax(scores)`.
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UtilityError {
    #[error("query {0} has no gold answer")]
    NoAnswer(String),
    #[error("query {0}: no candidates")]
    NoCandidates(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Numeric(#[from] LossError),
    #[error("document {0} is not in the collection")]
    MissingDocument(String),
}

pub fn utility_targets(
    query: &Query,
    candidates: &[&Document],
    gold_answer: &str,
    backend: &dyn LlmBackend,
) -> Result<UtilityDistribution, UtilityError> {
    if gold_answer.trim().is_empty() {
        return Err(UtilityError::NoAnswer(query.query_id.clone()));
    }
    if candidates.is_empty() {
        return Err(UtilityError::NoCandidates(query.query_id.clone()));
    }
    let scores = candidates
        .iter()
        .map(|d| backend.answer_log_likelihood(&query.text, &d.text, gold_answer))
        .collect::<Result<Vec<f64>, _>>()?;
    let probabilities = candidate_distribution(&scores)?;
    Ok(UtilityDistribution {
        doc_ids: candidates.iter().map(|d| d.doc_id.clone()).collect(),
        scores,
        probabilities,
    })
}

/// Utility scores for every pool candidate of every query with a gold
/// answer (the first one). Queries without answers are left out.
pub fn build_utility_table(
    queries: &[&Query],
    pools: &BTreeMap<String, CandidatePool>,
    collection: &Collection,
    backend: &dyn LlmBackend,
) -> Result<UtilityTable, UtilityError> {
    let rows: Vec<Option<(String, BTreeMap<String, f64>)>> = queries
        .par_iter()
        .map(|q| {
            let (Some(answer), Some(pool)) = (q.gold_answers.first(), pools.get(&q.query_id)) else {
                return Ok(None);
            };
            let docs = pool
                .candidate_ids()
                .iter()
                .map(|id| collection.get(id).ok_or_else(|| UtilityError::MissingDocument(id.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            let dist = utility_targets(q, &docs, answer, backend)?;
            Ok(Some((q.query_id.clone(), dist.doc_ids.into_iter().zip(dist.scores).collect())))
        })
        .collect::<Result<_, UtilityError>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::{MockBackend, ScriptedBackend};

    #[test]
    fn full_answer_doc_gets_max_utility() {
        let m = MockBackend::from_name("mock:overlap:0").unwrap();
        let d = [
            Document::new("a", "the eiffel tower is tall"),
            Document::new("b", "paris has a tower"),
            Document::new("c", "nothing relevant"),
        ];
        let refs: Vec<&Document> = d.iter().collect();
        let u = utility_targets(&Query::new("q", "x"), &refs, "Eiffel Tower", &m).unwrap();
        assert_eq!(u.scores, vec![1.0, 0.5, 0.0]);
        assert!((u.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(u.probabilities[0] > u.probabilities[1]);
    }

    #[test]
    fn identical_candidates_give_uniform_targets() {
        let m = MockBackend::from_name("mock:overlap:0").unwrap();
        let d = [Document::new("a", "same text"), Document::new("b", "same text")];
        let refs: Vec<&Document> = d.iter().collect();
        let u = utility_targets(&Query::new("q", "x"), &refs, "text", &m).unwrap();
        assert!(u.probabilities.iter().all(|p| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn backend_without_scoring_is_a_capability_error() {
        let b = ScriptedBackend::from_texts(Vec::<String>::new());
        let d = [Document::new("a", "t")];
        let refs: Vec<&Document> = d.iter().collect();
        let err = utility_targets(&Query::new("q", "x"), &refs, "ans", &b).unwrap_err();
        assert!(matches!(err, UtilityError::Backend(BackendError::Capability { .. })));
    }
}
