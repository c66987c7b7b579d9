use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{read_jsonl, write_jsonl};
use super::{CorpusError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnnotationMethod {
    RelSel,
    UtilSel,
    UtilRank,
}

impl fmt::Display for AnnotationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RelSel => "RelSel",
            Self::UtilSel => "UtilSel",
            Self::UtilRank => "UtilRank",
        })
    }
}

impl std::str::FromStr for AnnotationMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relsel" => Ok(Self::RelSel),
            "utilsel" => Ok(Self::UtilSel),
            "utilrank" => Ok(Self::UtilRank),
            other => Err(format!("unknown annotation method {other:?}")),
        }
    }
}

/// Output of one annotation strategy for one query.
///
/// `candidate_ids` is the full pool shown to the annotator. `selected_ids`
/// holds the relevance-selection output that the utility stages worked on,
/// and `k_percent` the threshold used by utility ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub query_id: String,
    pub method: AnnotationMethod,
    pub positive_ids: Vec<String>,
    pub candidate_ids: Vec<String>,
    pub pseudo_answer: Option<String>,
    pub raw_responses: Vec<String>,
    pub annotator_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_percent: Option<f64>,
}

/// Number of top-ranked documents labelled positive by utility ranking:
/// `floor(len * k / 100)`, raised to one when that rounds down to zero.
pub fn utility_rank_cutoff(len: usize, k_percent: f64) -> usize {
    if len == 0 {
        return 0;
    }
    let n = (len as f64 * k_percent / 100.0).floor() as usize;
    n.clamp(1, len)
}

fn check_unique(ids: &[String], what: &str) -> std::result::Result<(), String> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(format!("duplicate id {id} in {what}"));
        }
    }
    Ok(())
}

fn check_subset(inner: &[String], outer: &[String], inner_name: &str, outer_name: &str) -> std::result::Result<(), String> {
    let outer: HashSet<&str> = outer.iter().map(String::as_str).collect();
    match inner.iter().find(|id| !outer.contains(id.as_str())) {
        Some(id) => Err(format!("{inner_name} contains {id}, which is not in {outer_name}")),
        None => Ok(()),
    }
}

impl AnnotationRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        check_unique(&self.positive_ids, "positive_ids")?;
        check_unique(&self.candidate_ids, "candidate_ids")?;
        check_subset(&self.positive_ids, &self.candidate_ids, "positive_ids", "candidate_ids")?;
        if let Some(sel) = &self.selected_ids {
            check_unique(sel, "selected_ids")?;
            check_subset(sel, &self.candidate_ids, "selected_ids", "candidate_ids")?;
            check_subset(&self.positive_ids, sel, "positive_ids", "selected_ids")?;
            if self.method == AnnotationMethod::UtilRank {
                if let Some(k) = self.k_percent {
                    let expected = utility_rank_cutoff(sel.len(), k);
                    if self.positive_ids.len() != expected {
                        return Err(format!(
                            "UtilRank over {} documents at k={k}% must have {expected} positives, found {}",
                            sel.len(),
                            self.positive_ids.len()
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Candidates not labelled positive, in candidate order.
    pub fn negative_ids(&self) -> Vec<String> {
        let pos: HashSet<&str> = self.positive_ids.iter().map(String::as_str).collect();
        self.candidate_ids
            .iter()
            .filter(|c| !pos.contains(c.as_str()))
            .cloned()
            .collect()
    }
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let records: Vec<AnnotationRecord> = read_jsonl(path)?;
    for r in &records {
        r.validate().map_err(|message| CorpusError::Validation {
            path: path.to_path_buf(),
            query_id: r.query_id.clone(),
            message,
        })?;
    }
    Ok(records)
}

pub fn write_annotations(records: &[AnnotationRecord], path: &Path) -> Result<()> {
    for r in records {
        r.validate().map_err(|message| CorpusError::Validation {
            path: path.to_path_buf(),
            query_id: r.query_id.clone(),
            message,
        })?;
    }
    write_jsonl(path, records)
}
