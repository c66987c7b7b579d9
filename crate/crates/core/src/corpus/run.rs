use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::io::{read_to_string, write_atomic};
use super::{CorpusError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
}

/// A ranked list per query. Queries keep first-appearance order; entries are
/// stored best-first, so rank `r` is `entries[r - 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Run {
    pub tag: String,
    order: Vec<String>,
    lists: HashMap<String, Vec<RunEntry>>,
}

impl Run {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            ..Self::default()
        }
    }

    /// Sets a query's ranked list from unsorted scores. Sorts by descending
    /// score, breaking ties by ascending doc_id, and keeps at most `depth`.
    pub fn set_scored(&mut self, query_id: &str, mut scored: Vec<(String, f64)>, depth: usize) {
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        scored.truncate(depth);
        let entries = scored
            .into_iter()
            .map(|(doc_id, score)| RunEntry { doc_id, score })
            .collect();
        self.set_ranked(query_id, entries);
    }

    /// Sets a query's list verbatim; the caller guarantees rank order.
    pub fn set_ranked(&mut self, query_id: &str, entries: Vec<RunEntry>) {
        if !self.lists.contains_key(query_id) {
            self.order.push(query_id.to_string());
        }
        self.lists.insert(query_id.to_string(), entries);
    }

    pub fn ranking(&self, query_id: &str) -> Option<&[RunEntry]> {
        self.lists.get(query_id).map(Vec::as_slice)
    }

    pub fn doc_ids(&self, query_id: &str) -> Vec<&str> {
        self.ranking(query_id)
            .map(|r| r.iter().map(|e| e.doc_id.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn top(&self, query_id: &str, k: usize) -> Vec<&str> {
        let mut ids = self.doc_ids(query_id);
        ids.truncate(k);
        ids
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.lists.contains_key(query_id)
    }

    /// Query ids in first-appearance order.
    pub fn query_ids(&self) -> impl Iterator<Item = &String> {
        self.order.iter()
    }

    pub fn num_queries(&self) -> usize {
        self.order.len()
    }
}

struct Pending {
    rank: i64,
    doc_id: String,
    score: f64,
    line: usize,
}

pub fn read_run(path: &Path) -> Result<Run> {
    let content = read_to_string(path)?;
    let mut tag: Option<String> = None;
    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Vec<Pending>> = HashMap::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(CorpusError::format(
                path,
                line_no,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let rank: i64 = cols[3]
            .parse()
            .map_err(|_| CorpusError::format(path, line_no, format!("invalid rank {:?}", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| CorpusError::format(path, line_no, format!("invalid score {:?}", cols[4])))?;
        if !score.is_finite() {
            return Err(CorpusError::format(path, line_no, "non-finite score"));
        }
        if tag.is_none() {
            tag = Some(cols[5].to_string());
        }
        let qid = cols[0].to_string();
        let list = pending.entry(qid.clone()).or_insert_with(|| {
            order.push(qid);
            Vec::new()
        });
        list.push(Pending {
            rank,
            doc_id: cols[2].to_string(),
            score,
            line: line_no,
        });
    }

    let mut run = Run::new(tag.unwrap_or_default());
    for qid in order {
        let mut list = pending.remove(&qid).unwrap_or_default();
        // stable: equal ranks would keep file order, but they are rejected below
        list.sort_by_key(|p| p.rank);
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(list.len());
        for (pos, p) in list.iter().enumerate() {
            let expected = pos as i64 + 1;
            if p.rank != expected {
                let msg = if pos > 0 && p.rank == list[pos - 1].rank {
                    format!("duplicate rank {} for query {qid}", p.rank)
                } else {
                    format!("rank sequence gap for query {qid}: expected {expected}, found {}", p.rank)
                };
                return Err(CorpusError::format(path, p.line, msg));
            }
            if !seen.insert(p.doc_id.as_str()) {
                return Err(CorpusError::format(
                    path,
                    p.line,
                    format!("duplicate doc_id in run: {} for query {qid}", p.doc_id),
                ));
            }
            if pos > 0 && p.score > list[pos - 1].score {
                return Err(CorpusError::format(
                    path,
                    p.line,
                    format!("score increases with rank for query {qid}"),
                ));
            }
            entries.push(RunEntry {
                doc_id: p.doc_id.clone(),
                score: p.score,
            });
        }
        run.set_ranked(&qid, entries);
    }
    Ok(run)
}

pub fn write_run(run: &Run, path: &Path) -> Result<()> {
    let tag = if run.tag.is_empty() { "run" } else { run.tag.as_str() };
    let mut out = String::new();
    for qid in run.query_ids() {
        for (i, e) in run.ranking(qid).unwrap_or_default().iter().enumerate() {
            out.push_str(&format!("{qid} Q0 {} {} {} {tag}\n", e.doc_id, i + 1, e.score));
        }
    }
    write_atomic(path, out.as_bytes())
}
