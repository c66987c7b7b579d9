use std::collections::BTreeMap;
use std::path::Path;

use super::io::{read_to_string, write_atomic};
use super::{CorpusError, Result};

/// Graded judgments keyed by query then document. Absent pairs are grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelevanceJudgments {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl RelevanceJudgments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.grades
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade);
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_relevant(&self, query_id: &str, doc_id: &str) -> bool {
        self.grade(query_id, doc_id) > 0
    }

    /// Documents with grade > 0, in ascending doc_id order.
    pub fn positives(&self, query_id: &str) -> Vec<String> {
        self.grades
            .get(query_id)
            .map(|m| {
                m.iter()
                    .filter(|(_, &g)| g > 0)
                    .map(|(d, _)| d.clone())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn judged(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(query_id)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.grades.contains_key(query_id)
    }

    /// Query ids in ascending order.
    pub fn query_ids(&self) -> impl Iterator<Item = &String> {
        self.grades.keys()
    }

    pub fn num_queries(&self) -> usize {
        self.grades.len()
    }

    pub fn num_entries(&self) -> usize {
        self.grades.values().map(BTreeMap::len).sum()
    }

    /// Restricts the judgments to the given queries.
    pub fn restrict<'a>(&self, query_ids: impl IntoIterator<Item = &'a str>) -> Self {
        let mut out = Self::new();
        for q in query_ids {
            if let Some(m) = self.grades.get(q) {
                out.grades.insert(q.to_string(), m.clone());
            }
        }
        out
    }
}

pub fn load_qrels(path: &Path) -> Result<RelevanceJudgments> {
    let content = read_to_string(path)?;
    let mut qrels = RelevanceJudgments::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(CorpusError::format(
                path,
                line_no,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let grade: i64 = cols[3].parse().map_err(|_| {
            CorpusError::format(path, line_no, format!("non-integer grade {:?}", cols[3]))
        })?;
        if grade < 0 {
            return Err(CorpusError::format(path, line_no, "negative grade"));
        }
        let grade = u32::try_from(grade)
            .map_err(|_| CorpusError::format(path, line_no, "grade out of range"))?;
        qrels.insert(cols[0], cols[2], grade);
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &RelevanceJudgments, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (q, docs) in &qrels.grades {
        for (d, g) in docs {
            out.push_str(&format!("{q} 0 {d} {g}\n"));
        }
    }
    write_atomic(path, out.as_bytes())
}
