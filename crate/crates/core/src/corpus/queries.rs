use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{read_jsonl, read_to_string, write_atomic, write_jsonl};
use super::{CorpusError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    /// Empty unless the query is used for answer-level (RAG) evaluation.
    #[serde(default)]
    pub gold_answers: Vec<String>,
}

impl Query {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            text: text.into(),
            gold_answers: Vec::new(),
        }
    }

    pub fn with_answers(mut self, answers: Vec<String>) -> Self {
        self.gold_answers = answers;
        self
    }
}

/// Queries in file order, indexed by id.
#[derive(Debug, Clone, Default)]
pub struct QuerySet {
    queries: Vec<Query>,
    index: HashMap<String, usize>,
}

impl QuerySet {
    pub fn from_queries(queries: Vec<Query>) -> std::result::Result<Self, String> {
        let mut index = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if q.query_id.is_empty() {
                return Err(format!("empty query_id at position {}", i + 1));
            }
            if index.insert(q.query_id.clone(), i).is_some() {
                return Err(format!("duplicate query_id {} at line {}", q.query_id, i + 1));
            }
        }
        Ok(Self { queries, index })
    }

    pub fn get(&self, query_id: &str) -> Option<&Query> {
        self.index.get(query_id).map(|&i| &self.queries[i])
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Query> {
        self.queries.iter()
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    /// Keeps only the queries whose ids satisfy `keep`, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(&Query) -> bool) -> QuerySet {
        let kept: Vec<Query> = self.queries.iter().filter(|q| keep(q)).cloned().collect();
        QuerySet::from_queries(kept).expect("subset of a valid set is valid")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AnswerLine {
    query_id: String,
    answers: Vec<String>,
}

/// Loads `query_id<TAB>text` lines and, when given, merges gold answers from
/// the sibling JSON Lines file.
pub fn load_queries(path: &Path, answers: Option<&Path>) -> Result<QuerySet> {
    let content = read_to_string(path)?;
    let mut queries = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        let Some((id, text)) = line.split_once('\t') else {
            return Err(CorpusError::format(path, line_no, "missing tab separator"));
        };
        if id.is_empty() {
            return Err(CorpusError::format(path, line_no, "empty query_id"));
        }
        if seen.insert(id.to_string(), line_no).is_some() {
            return Err(CorpusError::format(
                path,
                line_no,
                format!("duplicate query_id {id} at line {line_no}"),
            ));
        }
        queries.push(Query::new(id, text));
    }
    if let Some(answer_path) = answers {
        let table = load_answers(answer_path)?;
        for q in &mut queries {
            if let Some(a) = table.get(&q.query_id) {
                q.gold_answers = a.clone();
            }
        }
    }
    QuerySet::from_queries(queries).map_err(|m| CorpusError::format(path, 0, m))
}

pub fn load_answers(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let lines: Vec<AnswerLine> = read_jsonl(path)?;
    let mut out = BTreeMap::new();
    for (i, l) in lines.into_iter().enumerate() {
        if out.insert(l.query_id.clone(), l.answers).is_some() {
            return Err(CorpusError::format(
                path,
                i + 1,
                format!("duplicate query_id {} in answers", l.query_id),
            ));
        }
    }
    Ok(out)
}

pub fn write_queries(queries: &QuerySet, path: &Path) -> Result<()> {
    let mut out = String::new();
    for q in queries.iter() {
        out.push_str(&q.query_id);
        out.push('\t');
        out.push_str(&q.text);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes the answers sidecar for every query that has gold answers.
pub fn write_answers(queries: &QuerySet, path: &Path) -> Result<()> {
    let lines: Vec<AnswerLine> = queries
        .iter()
        .filter(|q| !q.gold_answers.is_empty())
        .map(|q| AnswerLine {
            query_id: q.query_id.clone(),
            answers: q.gold_answers.clone(),
        })
        .collect();
    write_jsonl(path, &lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queries_merge_answers_from_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let qp = dir.path().join("q.tsv");
        let ap = dir.path().join("a.jsonl");
        std::fs::write(&qp, "q1\twho built it\nq2\twhere\n").unwrap();
        std::fs::write(&ap, "{\"query_id\":\"q1\",\"answers\":[\"Eiffel\",\"G. Eiffel\"]}\n").unwrap();
        let qs = load_queries(&qp, Some(&ap)).unwrap();
        assert_eq!(qs.get("q1").unwrap().gold_answers, vec!["Eiffel", "G. Eiffel"]);
        assert!(qs.get("q2").unwrap().gold_answers.is_empty());

        let qp2 = dir.path().join("q2.tsv");
        let ap2 = dir.path().join("a2.jsonl");
        write_queries(&qs, &qp2).unwrap();
        write_answers(&qs, &ap2).unwrap();
        let again = load_queries(&qp2, Some(&ap2)).unwrap();
        assert_eq!(again.queries(), qs.queries());
    }

    #[test]
    fn duplicate_query_is_rejected() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "q1\ta\nq1\tb\n").unwrap();
        assert!(load_queries(f.path(), None).is_err());
    }
}
