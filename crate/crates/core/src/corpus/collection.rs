use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{read_to_string, write_atomic};
use super::{CorpusError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
        }
    }
}

/// An immutable set of documents, kept in file order with an id index.
#[derive(Debug, Clone, Default)]
pub struct Collection {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Collection {
    /// Builds a collection, rejecting duplicate or empty ids.
    pub fn from_documents(docs: Vec<Document>) -> std::result::Result<Self, String> {
        let mut index = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if doc.doc_id.is_empty() {
                return Err(format!("empty doc_id at position {}", i + 1));
            }
            if index.insert(doc.doc_id.clone(), i).is_some() {
                return Err(format!("duplicate doc_id {} at line {}", doc.doc_id, i + 1));
            }
        }
        Ok(Self { docs, index })
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.index.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.index.contains_key(doc_id)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.docs.iter()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }
}

pub fn load_collection(path: &Path) -> Result<Collection> {
    let content = read_to_string(path)?;
    let mut docs = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        let Some((id, text)) = line.split_once('\t') else {
            return Err(CorpusError::format(path, line_no, "missing tab separator"));
        };
        if id.is_empty() {
            return Err(CorpusError::format(path, line_no, "empty doc_id"));
        }
        if seen.insert(id.to_string(), line_no).is_some() {
            return Err(CorpusError::format(
                path,
                line_no,
                format!("duplicate doc_id {id} at line {line_no}"),
            ));
        }
        docs.push(Document::new(id, text));
    }
    Collection::from_documents(docs).map_err(|m| CorpusError::format(path, 0, m))
}

pub fn write_collection(collection: &Collection, path: &Path) -> Result<()> {
    let mut out = String::new();
    for doc in collection.iter() {
        out.push_str(&doc.doc_id);
        out.push('\t');
        out.push_str(&doc.text);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
