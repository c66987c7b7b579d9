use rayon::prelude::*;

use super::EvalError;
use crate::corpus::{Collection, Query, Run};
use crate::trainer::{dot, Encoder};

/// Exhaustive inner-product retrieval: every query against every document,
/// top `depth` by score with ties broken by ascending doc_id.
pub fn retrieve_full(
    encoder: &dyn Encoder,
    queries: &[&Query],
    collection: &Collection,
    depth: usize,
    tag: &str,
) -> Result<Run, EvalError> {
    if collection.is_empty() {
        return Err(EvalError::EmptyCollection);
    }
    if depth == 0 {
        return Err(EvalError::InvalidParameter("depth must be at least 1".into()));
    }
    let doc_vecs: Vec<Vec<f64>> = collection
        .documents()
        .par_iter()
        .map(|d| encoder.encode_doc(&d.text))
        .collect();
    let lists: Vec<Vec<(String, f64)>> = queries
        .par_iter()
        .map(|q| {
            let qv = encoder.encode_query(&q.text);
            collection
                .documents()
                .iter()
                .zip(&doc_vecs)
                .map(|(d, dv)| (d.doc_id.clone(), dot(&qv, dv)))
                .collect()
        })
        .collect();
    let mut run = Run::new(tag);
    for (q, scored) in queries.iter().zip(lists) {
        run.set_scored(&q.query_id, scored, depth);
    }
    Ok(run)
}
