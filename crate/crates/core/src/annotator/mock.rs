//! A deterministic stand-in for an annotation LLM.
//!
//! The mock reads the bundled prompt layout back out of the rendered prompt
//! (`[i] passage` lines, `Question:` and `Reference answer:` lines) and answers
//! with simple lexical policies:
//!
//! * relevance selection: passages sharing a non-stopword token with the
//!   query, most shared tokens first;
//! * pseudo answer and RAG answer: first sentence of passage `[1]`, or
//!   `UNKNOWN` without passages;
//! * utility selection: passages containing the answer string, plus each
//!   other passage with probability `false_positive_rate` (a stable hash of
//!   seed, query and passage decides);
//! * utility ranking: by answer containment, then answer-token overlap;
//! * answer likelihood: fraction of answer content tokens found in the passage.

use std::collections::HashSet;

use super::backend::{BackendError, LlmBackend};
use crate::rng;
use crate::text::{content_token_set, content_tokens, first_sentence};

pub const UNKNOWN_ANSWER: &str = "UNKNOWN";
pub const EMPTY_SELECTION: &str = "None of the passages";
pub const REFUSAL: &str = "I cannot determine";

// Phrases that identify each bundled template.
pub(crate) const MARK_RELEVANCE: &str = "topically relevant to the question";
pub(crate) const MARK_PSEUDO: &str = "write a short answer to the question";
pub(crate) const MARK_UTILITY_SELECT: &str = "List the identifiers of the useful passages";
pub(crate) const MARK_UTILITY_RANK: &str = "Rank all passages from most to least useful";
pub(crate) const MARK_RAG: &str = "Answer the question based on the given passages";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MockPolicy {
    /// Lexical oracle with the given utility false-positive rate.
    Overlap { false_positive_rate: f64 },
    /// Refuses every request.
    Refuse,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    name: String,
    policy: MockPolicy,
    seed: u64,
}

impl MockBackend {
    pub fn new(policy: MockPolicy, seed: u64) -> Self {
        let label = match policy {
            MockPolicy::Overlap { false_positive_rate } if false_positive_rate == 0.0 => "overlap".to_string(),
            MockPolicy::Overlap { false_positive_rate } => format!("fp{}", false_positive_rate * 100.0),
            MockPolicy::Refuse => "refuse".to_string(),
        };
        Self {
            name: format!("mock:{label}:{seed}"),
            policy,
            seed,
        }
    }

    /// Parses `mock:<policy>:<seed>` where policy is `overlap`, `refuse` or
    /// `fp<percent>` (e.g. `fp20`).
    pub fn from_name(name: &str) -> Result<Self, BackendError> {
        let parts: Vec<&str> = name.split(':').collect();
        let bad = || BackendError::Config(format!("mock backend name must be mock:<policy>:<seed>, got {name:?}"));
        if parts.len() != 3 || parts[0] != "mock" {
            return Err(bad());
        }
        let seed: u64 = parts[2].parse().map_err(|_| bad())?;
        let policy = match parts[1] {
            "overlap" => MockPolicy::Overlap { false_positive_rate: 0.0 },
            "refuse" => MockPolicy::Refuse,
            p if p.starts_with("fp") => {
                let pct: f64 = p[2..].parse().map_err(|_| bad())?;
                if !(0.0..=100.0).contains(&pct) {
                    return Err(bad());
                }
                MockPolicy::Overlap {
                    false_positive_rate: pct / 100.0,
                }
            }
            _ => return Err(bad()),
        };
        let mut b = Self::new(policy, seed);
        b.name = name.to_string();
        Ok(b)
    }

    pub fn policy(&self) -> MockPolicy {
        self.policy
    }
}

struct ParsedPrompt<'a> {
    passages: Vec<&'a str>,
    query: &'a str,
    answer: Option<&'a str>,
}

fn parse_prompt(prompt: &str) -> ParsedPrompt<'_> {
    let mut passages = Vec::new();
    let mut query = "";
    let mut answer = None;
    for line in prompt.lines() {
        if let Some(rest) = line.strip_prefix("Question: ") {
            query = rest.trim();
        } else if let Some(rest) = line.strip_prefix("Reference answer: ") {
            answer = Some(rest.trim());
        } else if let Some(rest) = line.strip_prefix('[') {
            if let Some((num, text)) = rest.split_once("] ") {
                if num.parse::<usize>().ok() == Some(passages.len() + 1) {
                    passages.push(text);
                }
            }
        }
    }
    ParsedPrompt { passages, query, answer }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn contains_answer(passage: &str, answer: &str) -> bool {
    let a = normalize_ws(answer);
    !a.is_empty() && normalize_ws(passage).contains(&a)
}

fn token_recall(answer: &str, passage: &str) -> f64 {
    let wanted: Vec<String> = content_tokens(answer);
    if wanted.is_empty() {
        return 0.0;
    }
    let have = content_token_set(passage);
    let unique: HashSet<&String> = wanted.iter().collect();
    unique.iter().filter(|t| have.contains(**t)).count() as f64 / unique.len() as f64
}

fn brackets(indices: impl IntoIterator<Item = usize>, sep: &str) -> String {
    indices
        .into_iter()
        .map(|i| format!("[{}]", i + 1))
        .collect::<Vec<_>>()
        .join(sep)
}

impl MockBackend {
    fn relevance(&self, p: &ParsedPrompt<'_>) -> String {
        let q = content_token_set(p.query);
        let mut hits: Vec<(usize, usize)> = p
            .passages
            .iter()
            .enumerate()
            .filter_map(|(i, text)| {
                let shared = content_token_set(text).intersection(&q).count();
                (shared > 0).then_some((i, shared))
            })
            .collect();
        hits.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        if hits.is_empty() {
            return EMPTY_SELECTION.to_string();
        }
        brackets(hits.into_iter().map(|(i, _)| i), ", ")
    }

    fn utility_select(&self, p: &ParsedPrompt<'_>, rate: f64) -> String {
        let answer = p.answer.unwrap_or_default();
        let picked: Vec<usize> = p
            .passages
            .iter()
            .enumerate()
            .filter(|(_, text)| {
                contains_answer(text, answer)
                    || (rate > 0.0 && rng::unit(self.seed, &["fp", p.query, text]) < rate)
            })
            .map(|(i, _)| i)
            .collect();
        if picked.is_empty() {
            return EMPTY_SELECTION.to_string();
        }
        brackets(picked, ", ")
    }

    fn utility_rank(&self, p: &ParsedPrompt<'_>) -> String {
        let answer = p.answer.unwrap_or_default();
        let mut scored: Vec<(usize, f64)> = p
            .passages
            .iter()
            .enumerate()
            .map(|(i, text)| {
                let exact = if contains_answer(text, answer) { 1.0 } else { 0.0 };
                (i, exact + token_recall(answer, text))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        brackets(scored.into_iter().map(|(i, _)| i), " > ")
    }

    fn first_passage_sentence(p: &ParsedPrompt<'_>) -> String {
        match p.passages.first() {
            Some(text) if !first_sentence(text).is_empty() => first_sentence(text).to_string(),
            _ => UNKNOWN_ANSWER.to_string(),
        }
    }
}

impl LlmBackend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, _max_output_tokens: usize) -> Result<String, BackendError> {
        let rate = match self.policy {
            MockPolicy::Refuse => return Ok(REFUSAL.to_string()),
            MockPolicy::Overlap { false_positive_rate } => false_positive_rate,
        };
        let parsed = parse_prompt(prompt);
        let reply = if prompt.contains(MARK_UTILITY_RANK) {
            self.utility_rank(&parsed)
        } else if prompt.contains(MARK_UTILITY_SELECT) {
            self.utility_select(&parsed, rate)
        } else if prompt.contains(MARK_RELEVANCE) {
            self.relevance(&parsed)
        } else if prompt.contains(MARK_PSEUDO) || prompt.contains(MARK_RAG) {
            Self::first_passage_sentence(&parsed)
        } else {
            REFUSAL.to_string()
        };
        Ok(reply)
    }

    fn answer_log_likelihood(&self, _query: &str, passage: &str, answer: &str) -> Result<f64, BackendError> {
        if self.policy == MockPolicy::Refuse {
            return Err(BackendError::Capability {
                backend: self.name.clone(),
                capability: "score answer likelihoods",
            });
        }
        Ok(token_recall(answer, passage))
    }
}
