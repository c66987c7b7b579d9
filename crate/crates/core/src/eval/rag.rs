//! Retrieval-augmented answer generation and its answer metrics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::answers::{answer_em_f1, rouge_l_max};
use super::metrics::MetricReport;
use super::EvalError;
use crate::annotator::{numbered_passages, BackendError, Bindings, LlmBackend, PromptSet, TemplateId};
use crate::corpus::{Collection, Document, Query, Run};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub query_id: String,
    pub passages_used: Vec<String>,
    pub generated_answer: String,
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationConfig {
    pub top_k: usize,
    pub retries: usize,
    pub max_output_tokens: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            top_k: 1,
            retries: 2,
            max_output_tokens: 64,
        }
    }
}

/// Prompts the generator with the query and its top `top_k` passages in rank
/// order. A backend that keeps failing yields a record flagged `failed`.
pub fn rag_generate(
    query: &Query,
    run: &Run,
    collection: &Collection,
    backend: &dyn LlmBackend,
    prompts: &PromptSet,
    config: &GenerationConfig,
) -> Result<GenerationRecord, EvalError> {
    let top = run.top(&query.query_id, config.top_k);
    if top.len() < config.top_k {
        return Err(EvalError::RunTooShort {
            query_id: query.query_id.clone(),
            have: top.len(),
            need: config.top_k,
        });
    }
    let docs: Vec<&Document> = top
        .iter()
        .map(|id| collection.get(id).ok_or_else(|| EvalError::MissingDocument(id.to_string())))
        .collect::<Result<_, _>>()?;
    let passages = numbered_passages(&docs);
    let prompt = prompts.get(TemplateId::RagAnswer).render(&Bindings {
        query: Some(&query.text),
        numbered_passages: Some(&passages),
        answer: None,
    })?;
    let mut record = GenerationRecord {
        query_id: query.query_id.clone(),
        passages_used: top.iter().map(|s| s.to_string()).collect(),
        generated_answer: String::new(),
        gold_answers: query.gold_answers.clone(),
        failed: false,
        error: None,
    };
    let mut last_error = String::new();
    for _ in 0..=config.retries {
        match backend.complete(&prompt, config.max_output_tokens) {
            Ok(text) => {
                record.generated_answer = text;
                return Ok(record);
            }
            Err(e @ BackendError::Transport(_)) => last_error = e.to_string(),
            Err(e) => {
                last_error = e.to_string();
                break;
            }
        }
    }
    log::warn!("query {}: generation failed: {last_error}", query.query_id);
    record.failed = true;
    record.error = Some(last_error);
    Ok(record)
}

pub fn generate_all(
    queries: &[&Query],
    run: &Run,
    collection: &Collection,
    backend: &dyn LlmBackend,
    prompts: &PromptSet,
    config: &GenerationConfig,
) -> Result<Vec<GenerationRecord>, EvalError> {
    queries
        .par_iter()
        .map(|q| rag_generate(q, run, collection, backend, prompts, config))
        .collect()
}

/// EM, F1 and ROUGE-L reports over generations. Failed generations and
/// queries without gold answers are listed in `skipped`.
pub fn answer_metrics(records: &[GenerationRecord], rouge_beta: f64, tag: &str) -> BTreeMap<String, MetricReport> {
    let mut em = BTreeMap::new();
    let mut f1 = BTreeMap::new();
    let mut rl = BTreeMap::new();
    let mut skipped = Vec::new();
    for r in records {
        if r.failed || r.gold_answers.is_empty() {
            skipped.push(r.query_id.clone());
            continue;
        }
        let (e, f) = answer_em_f1(&r.generated_answer, &r.gold_answers);
        em.insert(r.query_id.clone(), e);
        f1.insert(r.query_id.clone(), f);
        rl.insert(r.query_id.clone(), rouge_l_max(&r.generated_answer, &r.gold_answers, rouge_beta));
    }
    [("em", em), ("f1", f1), ("rouge_l", rl)]
        .into_iter()
        .map(|(name, values)| {
            let mut rep = MetricReport::from_values(name.to_string(), tag.to_string(), values);
            rep.skipped = skipped.clone();
            (name.to_string(), rep)
        })
        .collect()
}
