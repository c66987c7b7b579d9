//! Planted-relevance corpus.
//!
//! Every entity is a distinct (key, topic) pair with an answer type and an
//! answer word. Its query holds the key, the type word, two topic words and
//! a stock phrasing of stopwords. The answer-bearing document opens with
//! `<key> <type> <answer>.`; near-miss documents share the key and topic
//! under another type and state no answer, so they are relevant without
//! being useful. Distractors share only the key, topic documents only the
//! topic. Keys, answers and fillers recur across entities, and stopwords
//! come from a few fixed phrasings, so no token identifies a document and
//! train and test share vocabulary.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Collection, Document, Query, QuerySet, RelevanceJudgments};
use crate::rng::{self, StreamRng};
use crate::text::STOPWORDS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusShape {
    pub documents: usize,
    pub train_queries: usize,
    pub test_queries: usize,
    pub key_vocabulary: usize,
    pub answer_vocabulary: usize,
    pub answer_types: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    pub query_topic_words: usize,
    pub near_misses: usize,
    pub query_stopwords: usize,
    pub query_templates: usize,
    pub doc_stopwords: usize,
    pub doc_templates: usize,
    pub filler_vocabulary: usize,
}

impl Default for CorpusShape {
    fn default() -> Self {
        Self {
            documents: 2000,
            train_queries: 500,
            test_queries: 200,
            key_vocabulary: 150,
            answer_vocabulary: 200,
            answer_types: 10,
            topics: 100,
            words_per_topic: 5,
            query_topic_words: 2,
            near_misses: 1,
            query_stopwords: 8,
            query_templates: 4,
            doc_stopwords: 25,
            doc_templates: 8,
            filler_vocabulary: 30,
        }
    }
}

impl CorpusShape {
    pub fn entities(&self) -> usize {
        self.train_queries + self.test_queries
    }

    pub fn validate(&self) -> Result<(), String> {
        let entities = self.entities();
        if entities == 0 {
            return Err("at least one query is required".into());
        }
        let per_entity = 1 + self.near_misses;
        if self.documents < per_entity * entities {
            return Err(format!(
                "{} documents cannot hold {per_entity} planted documents for each of {entities} queries",
                self.documents
            ));
        }
        if self.topics < 2 || self.answer_types < 2 {
            return Err("at least two topics and two answer types are required".into());
        }
        if self.key_vocabulary * self.topics < entities {
            return Err(format!(
                "{} keys x {} topics cannot give {entities} distinct entities",
                self.key_vocabulary, self.topics
            ));
        }
        if self.words_per_topic < 2 || self.query_topic_words > self.words_per_topic {
            return Err("need words_per_topic >= 2 and query_topic_words <= words_per_topic".into());
        }
        if self.answer_vocabulary == 0 || self.filler_vocabulary == 0 {
            return Err("answer and filler vocabularies must be non-empty".into());
        }
        if self.query_templates == 0 || self.doc_templates == 0 {
            return Err("template counts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub collection: Collection,
    pub train_queries: QuerySet,
    pub test_queries: QuerySet,
    pub train_qrels: RelevanceJudgments,
    pub test_qrels: RelevanceJudgments,
}

struct Entity {
    key: String,
    topic: usize,
    kind: usize,
    answer: String,
}

struct Words<'a> {
    shape: &'a CorpusShape,
    doc_templates: Vec<Vec<String>>,
}

impl Words<'_> {
    fn topic(&self, t: usize) -> Vec<String> {
        (0..self.shape.words_per_topic).map(|w| format!("topic{t}w{w}")).collect()
    }

    fn filler(&self, r: &mut StreamRng) -> String {
        format!("filler{}", r.gen_range(0..self.shape.filler_vocabulary))
    }

    /// `<lead>. <body and a stopword phrasing, shuffled>.`
    fn document(&self, lead: &[String], mut body: Vec<String>, r: &mut StreamRng) -> String {
        body.extend(self.doc_templates.choose(r).expect("templates non-empty").iter().cloned());
        body.shuffle(r);
        format!("{}. {}.", lead.join(" "), body.join(" "))
    }
}

fn kind_word(k: usize) -> String {
    format!("type{k}")
}

fn stopwords(n: usize, r: &mut StreamRng) -> Vec<String> {
    (0..n).map(|_| STOPWORDS.choose(r).expect("non-empty").to_string()).collect()
}

fn other_than(n: usize, not: usize, r: &mut StreamRng) -> usize {
    (not + r.gen_range(1..n)) % n
}

pub fn generate(shape: &CorpusShape, seed: u64) -> Result<SynthData, String> {
    shape.validate()?;
    let mut r = rng::stream(seed, &["synth-corpus"]);
    let n = shape.entities();
    let entities: Vec<Entity> = rand::seq::index::sample(&mut r, shape.key_vocabulary * shape.topics, n)
        .into_iter()
        .map(|i| (i / shape.topics, i % shape.topics))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(key, topic)| Entity {
            key: format!("entity{key}"),
            topic,
            kind: r.gen_range(0..shape.answer_types),
            answer: format!("answer{}", r.gen_range(0..shape.answer_vocabulary)),
        })
        .collect();
    let words = Words {
        shape,
        doc_templates: (0..shape.doc_templates)
            .map(|_| stopwords(shape.doc_stopwords, &mut r))
            .collect(),
    };

    // (text, entity whose answer-bearing document this is)
    let mut texts: Vec<(String, Option<usize>)> = Vec::with_capacity(shape.documents);
    for (i, e) in entities.iter().enumerate() {
        let lead = [e.key.clone(), kind_word(e.kind), e.answer.clone()];
        texts.push((words.document(&lead, words.topic(e.topic), &mut r), Some(i)));
        for _ in 0..shape.near_misses {
            let lead = [
                e.key.clone(),
                kind_word(other_than(shape.answer_types, e.kind, &mut r)),
                words.filler(&mut r),
            ];
            texts.push((words.document(&lead, words.topic(e.topic), &mut r), None));
        }
    }
    // Fill alternately with key-only distractors and topic-only documents.
    while texts.len() < shape.documents {
        if texts.len() % 2 == 0 {
            let e = entities.choose(&mut r).expect("entities non-empty");
            let other = other_than(shape.topics, e.topic, &mut r);
            let lead = [e.key.clone(), words.filler(&mut r)];
            texts.push((words.document(&lead, words.topic(other), &mut r), None));
        } else {
            let mut body = words.topic(r.gen_range(0..shape.topics));
            body.shuffle(&mut r);
            body.truncate(shape.words_per_topic - 1);
            let lead = [words.filler(&mut r), words.filler(&mut r)];
            texts.push((words.document(&lead, body, &mut r), None));
        }
    }
    texts.shuffle(&mut r);

    let width = (shape.documents - 1).to_string().len();
    let mut answer_doc = vec![String::new(); n];
    let mut docs = Vec::with_capacity(texts.len());
    for (i, (text, owner)) in texts.into_iter().enumerate() {
        let id = format!("D{i:0width$}");
        if let Some(e) = owner {
            answer_doc[e] = id.clone();
        }
        docs.push(Document::new(id, text));
    }

    let phrasings: Vec<Vec<String>> = (0..shape.query_templates)
        .map(|_| stopwords(shape.query_stopwords, &mut r))
        .collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut train_qrels = RelevanceJudgments::new();
    let mut test_qrels = RelevanceJudgments::new();
    for (i, e) in entities.iter().enumerate() {
        let mut toks = vec![e.key.clone(), kind_word(e.kind)];
        let mut topic = words.topic(e.topic);
        topic.shuffle(&mut r);
        toks.extend(topic.into_iter().take(shape.query_topic_words));
        toks.extend(phrasings.choose(&mut r).expect("templates non-empty").iter().cloned());
        toks.shuffle(&mut r);
        let (qid, set, qrels) = if i < shape.train_queries {
            (format!("train{i}"), &mut train, &mut train_qrels)
        } else {
            (format!("test{}", i - shape.train_queries), &mut test, &mut test_qrels)
        };
        qrels.insert(qid.clone(), answer_doc[i].clone(), 1);
        set.push(Query::new(qid, toks.join(" ")).with_answers(vec![e.answer.clone()]));
    }
    Ok(SynthData {
        collection: Collection::from_documents(docs)?,
        train_queries: QuerySet::from_queries(train)?,
        test_queries: QuerySet::from_queries(test)?,
        train_qrels,
        test_qrels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{content_token_set, first_sentence};

    fn small() -> CorpusShape {
        CorpusShape {
            documents: 120,
            train_queries: 30,
            test_queries: 10,
            key_vocabulary: 10,
            answer_vocabulary: 15,
            topics: 8,
            ..Default::default()
        }
    }

    #[test]
    fn shape_and_planted_answers() {
        let d = generate(&small(), 3).unwrap();
        assert_eq!(d.collection.len(), 120);
        assert_eq!(d.train_queries.len(), 30);
        assert_eq!(d.test_queries.len(), 10);
        for q in d.train_queries.iter().chain(d.test_queries.iter()) {
            let qrels = if q.query_id.starts_with("train") { &d.train_qrels } else { &d.test_qrels };
            let pos = qrels.positives(&q.query_id);
            assert_eq!(pos.len(), 1);
            let doc = d.collection.get(&pos[0]).unwrap();
            let answer = &q.gold_answers[0];
            let lead = first_sentence(&doc.text);
            assert!(lead.ends_with(&format!(" {answer}.")));
            // a near miss shares everything with the query but the type word
            let qt = content_token_set(&q.text);
            let near = d.collection.iter().filter(|x| {
                let t = content_token_set(&x.text);
                qt.iter().filter(|w| !w.starts_with("type")).all(|w| t.contains(w))
                    && !qt.iter().any(|w| w.starts_with("type") && t.contains(w))
            });
            assert!(near.count() >= 1);
            // key, type and topic words shared with the query
            let shared = content_token_set(&q.text).intersection(&content_token_set(&doc.text)).count();
            assert_eq!(shared, 4);
        }
    }

    #[test]
    fn relevant_document_has_the_largest_content_overlap() {
        let d = generate(&small(), 4).unwrap();
        for q in d.train_queries.iter() {
            let rel = &d.train_qrels.positives(&q.query_id)[0];
            let qt = content_token_set(&q.text);
            for doc in d.collection.iter().filter(|x| &x.doc_id != rel) {
                assert!(content_token_set(&doc.text).intersection(&qt).count() < 4);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(), 9).unwrap();
        let b = generate(&small(), 9).unwrap();
        let c = generate(&small(), 10).unwrap();
        assert_eq!(a.collection.documents(), b.collection.documents());
        assert_ne!(a.collection.documents(), c.collection.documents());
    }

    #[test]
    fn too_few_documents_rejected() {
        let s = CorpusShape {
            documents: 50,
            ..small()
        };
        assert!(generate(&s, 0).is_err());
    }
}
