//! Hybrid test judgments: human positives plus positives an LLM selects from
//! a merged pool of several runs, judged against the gold answer.

use std::collections::BTreeMap;

use super::EvalError;
use crate::annotator::Annotator;
use crate::corpus::{Collection, Document, Query, RelevanceJudgments, Run};
use crate::pool::round_robin_merge;

pub const HYBRID_POOL_DEPTH: usize = 20;

#[derive(Debug, Clone, Default)]
pub struct HybridOutcome {
    pub qrels: RelevanceJudgments,
    /// LLM positives that were not already human positives.
    pub added: BTreeMap<String, Vec<String>>,
    pub skipped_no_answer: Vec<String>,
    /// Queries whose LLM judgment failed; they keep only human positives.
    pub failed: Vec<String>,
}

/// For each query, merges the top `pool_depth` of every run (round robin,
/// first occurrence kept), lets the annotator utility-select against the
/// first gold answer, and unions the result with the human positives. All
/// output grades are 1.
pub fn build_hybrid_qrels(
    runs: &[&Run],
    human: &RelevanceJudgments,
    queries: &[&Query],
    collection: &Collection,
    annotator: &Annotator,
    pool_depth: usize,
) -> Result<HybridOutcome, EvalError> {
    let mut out = HybridOutcome::default();
    for q in queries {
        let Some(answer) = q.gold_answers.first() else {
            log::warn!("query {} has no gold answer; left out of hybrid judgments", q.query_id);
            out.skipped_no_answer.push(q.query_id.clone());
            continue;
        };
        let pool: Vec<String> = round_robin_merge(&q.query_id, runs, pool_depth)
            .into_iter()
            .map(|(d, _)| d)
            .collect();
        let docs: Vec<&Document> = pool
            .iter()
            .map(|id| collection.get(id).ok_or_else(|| EvalError::MissingDocument(id.clone())))
            .collect::<Result<_, _>>()?;
        let humans = human.positives(&q.query_id);
        for h in &humans {
            out.qrels.insert(q.query_id.clone(), h.clone(), 1);
        }
        let mut transcript = Vec::new();
        match annotator.utility_select_windowed(q, &docs, answer, &mut transcript) {
            Ok(selected) => {
                let new: Vec<String> = selected.into_iter().filter(|d| !humans.contains(d)).collect();
                for d in &new {
                    out.qrels.insert(q.query_id.clone(), d.clone(), 1);
                }
                out.added.insert(q.query_id.clone(), new);
            }
            Err(e) => {
                log::warn!("{e}");
                out.failed.push(q.query_id.clone());
            }
        }
    }
    Ok(out)
}
