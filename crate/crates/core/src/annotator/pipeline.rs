//! The staged annotation pipeline: relevance selection, pseudo-answer
//! generation, then utility selection or utility ranking.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::backend::{BackendError, LlmBackend};
use super::parse::{is_empty_selection, parse_id_list, ParseError};
use super::prompts::{numbered_passages, Bindings, PromptSet, TemplateError, TemplateId};
use crate::corpus::{utility_rank_cutoff, AnnotationMethod, AnnotationRecord, Collection, Document, Query};
use crate::pool::CandidatePool;
use crate::rng;

/// Passages per prompt: one positive plus thirty hard negatives.
pub const DEFAULT_WINDOW: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    RelevanceSelection,
    PseudoAnswer,
    UtilitySelection,
    UtilityRanking,
    RagAnswer,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RelevanceSelection => "relevance selection",
            Self::PseudoAnswer => "pseudo answer",
            Self::UtilitySelection => "utility selection",
            Self::UtilityRanking => "utility ranking",
            Self::RagAnswer => "rag answer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnotateError {
    #[error("query {query_id}: {stage} failed after {attempts} attempts: {last_error}")]
    Exhausted {
        query_id: String,
        stage: Stage,
        attempts: usize,
        last_error: String,
    },
    #[error("query {query_id}: {stage}: {source}")]
    Backend {
        query_id: String,
        stage: Stage,
        #[source]
        source: BackendError,
    },
    #[error("query {query_id}: {stage} got {size} passages, more than the prompt capacity of {capacity}")]
    Capacity {
        query_id: String,
        stage: Stage,
        size: usize,
        capacity: usize,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("query {query_id}: document {doc_id} is not in the collection")]
    MissingDocument { query_id: String, doc_id: String },
    #[error("invalid annotator setting: {0}")]
    InvalidParameter(String),
}

impl AnnotateError {
    /// True when the failure came from the backend rather than the inputs.
    pub fn is_backend_failure(&self) -> bool {
        matches!(self, Self::Exhausted { .. } | Self::Backend { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorConfig {
    pub method: AnnotationMethod,
    pub k_percent: f64,
    /// Extra attempts after the first on parse or transport failure.
    pub retries: usize,
    pub window: usize,
    pub max_output_tokens: usize,
    /// Shuffle each pool before showing it, keyed by `(seed, query_id)`.
    pub shuffle: bool,
    pub seed: u64,
    pub parallelism: usize,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            method: AnnotationMethod::UtilSel,
            k_percent: 10.0,
            retries: 2,
            window: DEFAULT_WINDOW,
            max_output_tokens: 256,
            shuffle: true,
            seed: 0,
            parallelism: 4,
        }
    }
}

impl AnnotatorConfig {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return Err(AnnotateError::InvalidParameter(format!(
                "k_percent must be in (0, 100], got {}",
                self.k_percent
            )));
        }
        if self.window == 0 {
            return Err(AnnotateError::InvalidParameter("window must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(AnnotateError::InvalidParameter("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of annotating many queries: records in input order plus failures.
#[derive(Debug, Default)]
pub struct AnnotationOutcome {
    pub records: Vec<AnnotationRecord>,
    pub failures: Vec<AnnotateError>,
}

pub struct Annotator {
    backend: Arc<dyn LlmBackend>,
    prompts: PromptSet,
    config: AnnotatorConfig,
}

fn ids_of(docs: &[&Document]) -> Vec<String> {
    docs.iter().map(|d| d.doc_id.clone()).collect()
}

enum Attempt<T> {
    Done(T),
    Retry(String),
}

impl Annotator {
    pub fn new(backend: Arc<dyn LlmBackend>, prompts: PromptSet, config: AnnotatorConfig) -> Result<Self, AnnotateError> {
        config.validate()?;
        Ok(Self {
            backend,
            prompts,
            config,
        })
    }

    pub fn config(&self) -> &AnnotatorConfig {
        &self.config
    }

    pub fn backend(&self) -> &dyn LlmBackend {
        self.backend.as_ref()
    }

    /// Sends `prompt` up to `1 + retries` times until `accept` takes the reply.
    fn ask<T>(
        &self,
        query_id: &str,
        stage: Stage,
        prompt: &str,
        transcript: &mut Vec<String>,
        accept: impl Fn(&str) -> Attempt<T>,
    ) -> Result<T, AnnotateError> {
        let attempts = self.config.retries + 1;
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            match self.backend.complete(prompt, self.config.max_output_tokens) {
                Ok(reply) => {
                    transcript.push(reply.clone());
                    match accept(&reply) {
                        Attempt::Done(v) => return Ok(v),
                        Attempt::Retry(why) => last_error = why,
                    }
                }
                Err(e @ BackendError::Transport(_)) => last_error = e.to_string(),
                Err(source) => {
                    return Err(AnnotateError::Backend {
                        query_id: query_id.to_string(),
                        stage,
                        source,
                    })
                }
            }
            log::warn!("query {query_id}: {stage} attempt {attempt}/{attempts} failed: {last_error}");
        }
        Err(AnnotateError::Exhausted {
            query_id: query_id.to_string(),
            stage,
            attempts,
            last_error,
        })
    }

    fn render(&self, id: TemplateId, query: &Query, docs: &[&Document], answer: Option<&str>) -> Result<String, TemplateError> {
        let passages = numbered_passages(docs);
        self.prompts.get(id).render(&Bindings {
            query: Some(&query.text),
            numbered_passages: Some(&passages),
            answer,
        })
    }

    fn select(
        &self,
        id: TemplateId,
        stage: Stage,
        query: &Query,
        docs: &[&Document],
        answer: Option<&str>,
        transcript: &mut Vec<String>,
    ) -> Result<Vec<String>, AnnotateError> {
        let prompt = self.render(id, query, docs, answer)?;
        let numbering = ids_of(docs);
        self.ask(&query.query_id, stage, &prompt, transcript, |reply| {
            match parse_id_list(reply, &numbering) {
                Ok(ids) => Attempt::Done(ids),
                Err(ParseError::NoIds) if is_empty_selection(reply) => Attempt::Done(Vec::new()),
                Err(e) => Attempt::Retry(e.to_string()),
            }
        })
    }

    fn check_capacity(&self, query: &Query, stage: Stage, size: usize) -> Result<(), AnnotateError> {
        if size > self.config.window {
            return Err(AnnotateError::Capacity {
                query_id: query.query_id.clone(),
                stage,
                size,
                capacity: self.config.window,
            });
        }
        Ok(())
    }

    /// Passages judged topically relevant, windowed over the candidates.
    /// Selections from successive windows are concatenated without repeats.
    pub fn relevance_select(
        &self,
        query: &Query,
        candidates: &[&Document],
        transcript: &mut Vec<String>,
    ) -> Result<Vec<String>, AnnotateError> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for window in candidates.chunks(self.config.window) {
            let ids = self.select(
                TemplateId::RelevanceSelection,
                Stage::RelevanceSelection,
                query,
                window,
                None,
                transcript,
            )?;
            for id in ids {
                if seen.insert(id.clone()) {
                    out.push(id);
                }
            }
        }
        Ok(out)
    }

    pub fn generate_pseudo_answer(
        &self,
        query: &Query,
        selected: &[&Document],
        transcript: &mut Vec<String>,
    ) -> Result<String, AnnotateError> {
        self.check_capacity(query, Stage::PseudoAnswer, selected.len())?;
        let prompt = self.render(TemplateId::PseudoAnswer, query, selected, None)?;
        self.ask(&query.query_id, Stage::PseudoAnswer, &prompt, transcript, |reply| {
            let t = reply.trim();
            if t.is_empty() {
                Attempt::Retry("empty answer".into())
            } else {
                Attempt::Done(t.to_string())
            }
        })
    }

    pub fn utility_select(
        &self,
        query: &Query,
        selected: &[&Document],
        answer: &str,
        transcript: &mut Vec<String>,
    ) -> Result<Vec<String>, AnnotateError> {
        self.check_capacity(query, Stage::UtilitySelection, selected.len())?;
        if selected.is_empty() {
            return Ok(Vec::new());
        }
        self.select(
            TemplateId::UtilitySelection,
            Stage::UtilitySelection,
            query,
            selected,
            Some(answer),
            transcript,
        )
    }

    /// Utility selection over arbitrarily many passages, one window at a time.
    pub fn utility_select_windowed(
        &self,
        query: &Query,
        docs: &[&Document],
        answer: &str,
        transcript: &mut Vec<String>,
    ) -> Result<Vec<String>, AnnotateError> {
        let mut out = Vec::new();
        for window in docs.chunks(self.config.window) {
            out.extend(self.utility_select(query, window, answer, transcript)?);
        }
        Ok(out)
    }

    /// Full utility order over `selected`. Ids the reply leaves out are
    /// appended in input order.
    pub fn utility_order(
        &self,
        query: &Query,
        selected: &[&Document],
        answer: &str,
        transcript: &mut Vec<String>,
    ) -> Result<Vec<String>, AnnotateError> {
        self.check_capacity(query, Stage::UtilityRanking, selected.len())?;
        if selected.is_empty() {
            return Ok(Vec::new());
        }
        let prompt = self.render(TemplateId::UtilityRanking, query, selected, Some(answer))?;
        let numbering = ids_of(selected);
        let mut order = self.ask(&query.query_id, Stage::UtilityRanking, &prompt, transcript, |reply| {
            match parse_id_list(reply, &numbering) {
                Ok(ids) if !ids.is_empty() => Attempt::Done(ids),
                Ok(_) => Attempt::Retry("ranking names no passage of this prompt".into()),
                Err(e) => Attempt::Retry(e.to_string()),
            }
        })?;
        let ranked: HashSet<String> = order.iter().cloned().collect();
        let missing: Vec<String> = numbering.into_iter().filter(|id| !ranked.contains(id)).collect();
        if !missing.is_empty() {
            log::warn!(
                "query {}: ranking omitted {} passages, appending them in input order",
                query.query_id,
                missing.len()
            );
            order.extend(missing);
        }
        Ok(order)
    }

    /// Top `max(1, floor(|selected| * k / 100))` of the utility order.
    pub fn utility_rank(
        &self,
        query: &Query,
        selected: &[&Document],
        answer: &str,
        k_percent: f64,
        transcript: &mut Vec<String>,
    ) -> Result<Vec<String>, AnnotateError> {
        if !(k_percent > 0.0 && k_percent <= 100.0) {
            return Err(AnnotateError::InvalidParameter(format!(
                "k_percent must be in (0, 100], got {k_percent}"
            )));
        }
        let mut order = self.utility_order(query, selected, answer, transcript)?;
        order.truncate(utility_rank_cutoff(order.len(), k_percent));
        Ok(order)
    }

    /// Runs the configured method on candidates in the order given.
    pub fn annotate(&self, query: &Query, candidates: &[&Document]) -> Result<AnnotationRecord, AnnotateError> {
        let method = self.config.method;
        let mut transcript = Vec::new();
        let candidate_ids = ids_of(candidates);
        let selected_ids = self.relevance_select(query, candidates, &mut transcript)?;
        let mut record = AnnotationRecord {
            query_id: query.query_id.clone(),
            method,
            positive_ids: Vec::new(),
            candidate_ids,
            pseudo_answer: None,
            raw_responses: Vec::new(),
            annotator_tag: self.backend.name().to_string(),
            selected_ids: None,
            k_percent: None,
        };
        if method == AnnotationMethod::RelSel {
            record.positive_ids = selected_ids;
            record.raw_responses = transcript;
            return Ok(record);
        }
        let selected: Vec<&Document> = selected_ids
            .iter()
            .map(|id| {
                *candidates
                    .iter()
                    .find(|d| &d.doc_id == id)
                    .expect("selection is drawn from the candidates")
            })
            .collect();
        let answer = self.generate_pseudo_answer(query, &selected, &mut transcript)?;
        record.positive_ids = match method {
            AnnotationMethod::UtilSel => self.utility_select(query, &selected, &answer, &mut transcript)?,
            AnnotationMethod::UtilRank => {
                record.k_percent = Some(self.config.k_percent);
                self.utility_rank(query, &selected, &answer, self.config.k_percent, &mut transcript)?
            }
            AnnotationMethod::RelSel => unreachable!(),
        };
        record.pseudo_answer = Some(answer);
        record.selected_ids = Some(selected_ids);
        record.raw_responses = transcript;
        Ok(record)
    }

    /// Candidate order shown to the annotator for a pool.
    pub fn presentation_order(&self, pool: &CandidatePool) -> Vec<String> {
        let mut ids = pool.candidate_ids();
        if self.config.shuffle {
            ids.shuffle(&mut rng::stream(self.config.seed, &["annotate-order", &pool.query_id]));
        }
        ids
    }

    pub fn annotate_pool(
        &self,
        query: &Query,
        pool: &CandidatePool,
        collection: &Collection,
    ) -> Result<AnnotationRecord, AnnotateError> {
        let order = self.presentation_order(pool);
        let docs = order
            .iter()
            .map(|id| {
                collection.get(id).ok_or_else(|| AnnotateError::MissingDocument {
                    query_id: query.query_id.clone(),
                    doc_id: id.clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.annotate(query, &docs)
    }

    /// Annotates each `(query, pool)` pair with bounded parallelism. Records
    /// keep input order; failed queries are reported, not fatal.
    pub fn annotate_all(&self, work: &[(&Query, &CandidatePool)], collection: &Collection) -> AnnotationOutcome {
        let run = || -> Vec<Result<AnnotationRecord, AnnotateError>> {
            work.par_iter()
                .map(|(q, p)| self.annotate_pool(q, p, collection))
                .collect()
        };
        let results = match rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism)
            .build()
        {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("could not build annotation thread pool ({e}); running on the global pool");
                run()
            }
        };
        let mut outcome = AnnotationOutcome::default();
        for r in results {
            match r {
                Ok(rec) => outcome.records.push(rec),
                Err(e) => {
                    log::warn!("{e}");
                    outcome.failures.push(e);
                }
            }
        }
        outcome
    }
}
