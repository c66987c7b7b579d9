//! Lexical first-stage rankers used to mine hard negatives: BM25 and a raw
//! term-frequency dot product that counts stopwords like any other token.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::corpus::{Collection, Query, Run};
use crate::text::tokenize;

pub const BM25_K1: f64 = 0.9;
pub const BM25_B: f64 = 0.4;

struct Index {
    postings: HashMap<String, Vec<(usize, f64)>>,
    lengths: Vec<f64>,
}

impl Index {
    fn build(collection: &Collection) -> Self {
        let mut postings: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
        let mut lengths = Vec::with_capacity(collection.len());
        for (i, d) in collection.iter().enumerate() {
            let toks = tokenize(&d.text);
            lengths.push(toks.len() as f64);
            let mut tf: HashMap<String, f64> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_insert(0.0) += 1.0;
            }
            for (t, c) in tf {
                postings.entry(t).or_default().push((i, c));
            }
        }
        // documents were visited in order, so each posting list is sorted
        Self { postings, lengths }
    }
}

fn ranked(collection: &Collection, queries: &[&Query], depth: usize, tag: &str, score: impl Fn(&str) -> Vec<f64> + Sync) -> Run {
    let lists: Vec<Vec<(String, f64)>> = queries
        .par_iter()
        .map(|q| {
            score(&q.text)
                .into_iter()
                .enumerate()
                .filter(|&(_, s)| s > 0.0)
                .map(|(i, s)| (collection.documents()[i].doc_id.clone(), s))
                .collect()
        })
        .collect();
    let mut run = Run::new(tag);
    for (q, l) in queries.iter().zip(lists) {
        run.set_scored(&q.query_id, l, depth);
    }
    run
}

pub fn bm25_run(collection: &Collection, queries: &[&Query], depth: usize) -> Run {
    let index = Index::build(collection);
    let n = collection.len() as f64;
    let avg = index.lengths.iter().sum::<f64>() / n.max(1.0);
    ranked(collection, queries, depth, "bm25", |text| {
        let mut scores = vec![0.0; collection.len()];
        for t in tokenize(text) {
            let Some(list) = index.postings.get(&t) else { continue };
            let df = list.len() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            for &(i, tf) in list {
                let norm = BM25_K1 * (1.0 - BM25_B + BM25_B * index.lengths[i] / avg);
                scores[i] += idf * tf * (BM25_K1 + 1.0) / (tf + norm);
            }
        }
        scores
    })
}

pub fn tf_run(collection: &Collection, queries: &[&Query], depth: usize) -> Run {
    let index = Index::build(collection);
    ranked(collection, queries, depth, "tf", |text| {
        let mut scores = vec![0.0; collection.len()];
        for t in tokenize(text) {
            if let Some(list) = index.postings.get(&t) {
                for &(i, tf) in list {
                    scores[i] += tf;
                }
            }
        }
        scores
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn coll() -> Collection {
        Collection::from_documents(vec![
            Document::new("a", "red fox den the the the"),
            Document::new("b", "red car"),
            Document::new("c", "the the the the"),
        ])
        .unwrap()
    }

    #[test]
    fn bm25_prefers_rare_terms() {
        let q = Query::new("q", "fox the");
        let run = bm25_run(&coll(), &[&q], 10);
        assert_eq!(run.doc_ids("q")[0], "a");
        assert!(!run.doc_ids("q").contains(&"b"));
    }

    #[test]
    fn bm25_matches_hand_computation() {
        let q = Query::new("q", "car");
        let run = bm25_run(&coll(), &[&q], 10);
        let avg = (6.0 + 2.0 + 4.0) / 3.0;
        let idf = ((3.0f64 - 1.0 + 0.5) / 1.5 + 1.0).ln();
        let norm = BM25_K1 * (1.0 - BM25_B + BM25_B * 2.0 / avg);
        let expected = idf * (BM25_K1 + 1.0) / (1.0 + norm);
        assert!((run.ranking("q").unwrap()[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn tf_counts_stopwords() {
        let q = Query::new("q", "the fox");
        let run = tf_run(&coll(), &[&q], 10);
        assert_eq!(run.doc_ids("q"), vec!["a", "c"]);
        assert_eq!(run.ranking("q").unwrap()[0].score, 4.0);
    }
}
