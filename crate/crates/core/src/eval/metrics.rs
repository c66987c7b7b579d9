//! Ranked-retrieval metrics over TREC-style runs and qrels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{RelevanceJudgments, Run};

/// Per-query values and their mean for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub mean: f64,
    pub per_query: BTreeMap<String, f64>,
    /// Queries excluded from the mean, e.g. recall without positives.
    pub skipped: Vec<String>,
    /// Judged queries absent from the run; they score 0.
    #[serde(default)]
    pub missing_from_run: Vec<String>,
    pub query_count: usize,
    pub tag: String,
}

impl MetricReport {
    pub fn from_values(metric: String, tag: String, per_query: BTreeMap<String, f64>) -> Self {
        // BTreeMap iteration is sorted by query id, so the sum is reproducible.
        let mean = if per_query.is_empty() {
            0.0
        } else {
            per_query.values().sum::<f64>() / per_query.len() as f64
        };
        Self {
            metric,
            mean,
            query_count: per_query.len(),
            per_query,
            skipped: Vec::new(),
            missing_from_run: Vec::new(),
            tag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Mrr,
    Recall,
    Ndcg,
}

/// A metric name such as `mrr@10`, `recall@1000` or `ndcg@10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub k: usize,
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            MetricKind::Mrr => "mrr",
            MetricKind::Recall => "recall",
            MetricKind::Ndcg => "ndcg",
        };
        write!(f, "{name}@{}", self.k)
    }
}

impl FromStr for MetricSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, k) = s
            .trim()
            .split_once('@')
            .ok_or_else(|| format!("metric {s:?} must look like name@k"))?;
        let kind = match name.to_ascii_lowercase().as_str() {
            "mrr" => MetricKind::Mrr,
            "recall" => MetricKind::Recall,
            "ndcg" => MetricKind::Ndcg,
            other => return Err(format!("unknown metric {other:?}")),
        };
        let k: usize = k.parse().map_err(|_| format!("metric {s:?}: k must be a positive integer"))?;
        if k == 0 {
            return Err(format!("metric {s:?}: k must be at least 1"));
        }
        Ok(Self { kind, k })
    }
}

pub fn parse_metric_list(list: &str) -> Result<Vec<MetricSpec>, String> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

fn reciprocal_rank(top: &[&str], qrels: &RelevanceJudgments, qid: &str) -> f64 {
    top.iter()
        .position(|d| qrels.is_relevant(qid, d))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(rank0: usize) -> f64 {
    1.0 / ((rank0 + 2) as f64).log2()
}

fn ndcg(top: &[&str], qrels: &RelevanceJudgments, qid: &str, k: usize) -> f64 {
    let dcg: f64 = top
        .iter()
        .enumerate()
        .map(|(i, d)| gain(qrels.grade(qid, d)) * discount(i))
        .sum();
    let mut grades: Vec<u32> = qrels
        .judged(qid)
        .map(|m| m.values().copied().filter(|&g| g > 0).collect())
        .unwrap_or_default();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = grades.iter().take(k).enumerate().map(|(i, &g)| gain(g) * discount(i)).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn evaluate_metric(run: &Run, qrels: &RelevanceJudgments, spec: MetricSpec) -> MetricReport {
    let mut per_query = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut missing = Vec::new();
    for qid in qrels.query_ids() {
        let positives = qrels.positives(qid);
        if spec.kind == MetricKind::Recall && positives.is_empty() {
            skipped.push(qid.clone());
            continue;
        }
        if !run.contains_query(qid) {
            log::warn!("query {qid} is judged but absent from run {}; scoring 0", run.tag);
            missing.push(qid.clone());
        }
        let top = run.top(qid, spec.k);
        let value = match spec.kind {
            MetricKind::Mrr => reciprocal_rank(&top, qrels, qid),
            MetricKind::Recall => {
                let hit = top.iter().filter(|d| qrels.is_relevant(qid, d)).count();
                hit as f64 / positives.len() as f64
            }
            MetricKind::Ndcg => ndcg(&top, qrels, qid, spec.k),
        };
        per_query.insert(qid.clone(), value);
    }
    let mut report = MetricReport::from_values(spec.to_string(), run.tag.clone(), per_query);
    report.skipped = skipped;
    report.missing_from_run = missing;
    report
}

pub fn mrr_at_k(run: &Run, qrels: &RelevanceJudgments, k: usize) -> MetricReport {
    evaluate_metric(run, qrels, MetricSpec { kind: MetricKind::Mrr, k })
}

pub fn recall_at_k(run: &Run, qrels: &RelevanceJudgments, k: usize) -> MetricReport {
    evaluate_metric(run, qrels, MetricSpec { kind: MetricKind::Recall, k })
}

pub fn ndcg_at_k(run: &Run, qrels: &RelevanceJudgments, k: usize) -> MetricReport {
    evaluate_metric(run, qrels, MetricSpec { kind: MetricKind::Ndcg, k })
}

/// Reports keyed by the metric name as given (`mrr@10`, ...).
pub fn evaluate_run(run: &Run, qrels: &RelevanceJudgments, specs: &[MetricSpec]) -> BTreeMap<String, MetricReport> {
    specs
        .iter()
        .map(|&s| (s.to_string(), evaluate_metric(run, qrels, s)))
        .collect()
}
