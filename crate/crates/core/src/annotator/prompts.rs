//! Prompt templates. Bodies are plain text assets; the placeholders
//! `{query}`, `{numbered_passages}` and `{answer}` are the only contract.

use std::fmt;
use std::path::Path;

use crate::corpus::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateId {
    RelevanceSelection,
    PseudoAnswer,
    UtilitySelection,
    UtilityRanking,
    RagAnswer,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        Self::RelevanceSelection,
        Self::PseudoAnswer,
        Self::UtilitySelection,
        Self::UtilityRanking,
        Self::RagAnswer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::RelevanceSelection => "relevance_selection",
            Self::PseudoAnswer => "pseudo_answer",
            Self::UtilitySelection => "utility_selection",
            Self::UtilityRanking => "utility_ranking",
            Self::RagAnswer => "rag_answer",
        }
    }

    fn default_body(self) -> &'static str {
        match self {
            Self::RelevanceSelection => include_str!("../../prompts/relevance_selection.txt"),
            Self::PseudoAnswer => include_str!("../../prompts/pseudo_answer.txt"),
            Self::UtilitySelection => include_str!("../../prompts/utility_selection.txt"),
            Self::UtilityRanking => include_str!("../../prompts/utility_ranking.txt"),
            Self::RagAnswer => include_str!("../../prompts/rag_answer.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const PLACEHOLDERS: [&str; 3] = ["query", "numbered_passages", "answer"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template}: placeholder {{{placeholder}}} is unbound")]
    Unbound {
        template: &'static str,
        placeholder: &'static str,
    },
    #[error("reading template {path}: {message}")]
    Load { path: String, message: String },
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Bindings<'a> {
    pub query: Option<&'a str>,
    pub numbered_passages: Option<&'a str>,
    pub answer: Option<&'a str>,
}

impl<'a> Bindings<'a> {
    fn get(&self, name: &str) -> Option<&'a str> {
        match name {
            "query" => self.query,
            "numbered_passages" => self.numbered_passages,
            "answer" => self.answer,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: impl Into<String>) -> Self {
        Self {
            id,
            body: body.into(),
        }
    }

    /// Placeholders that occur in the body.
    pub fn required(&self) -> Vec<&'static str> {
        PLACEHOLDERS
            .iter()
            .copied()
            .filter(|p| self.body.contains(&format!("{{{p}}}")))
            .collect()
    }

    /// Substitutes every placeholder in a single pass, so bound values that
    /// themselves contain `{query}` and the like are left untouched.
    pub fn render(&self, bindings: &Bindings<'_>) -> Result<String, TemplateError> {
        for p in self.required() {
            if bindings.get(p).is_none() {
                return Err(TemplateError::Unbound {
                    template: self.id.name(),
                    placeholder: p,
                });
            }
        }
        let mut out = String::with_capacity(self.body.len() + 256);
        let mut rest = self.body.as_str();
        'scan: while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            for p in PLACEHOLDERS {
                let token_len = p.len() + 2;
                if tail.len() >= token_len && &tail[1..=p.len()] == p && tail.as_bytes()[p.len() + 1] == b'}' {
                    out.push_str(bindings.get(p).unwrap_or_default());
                    rest = &tail[token_len..];
                    continue 'scan;
                }
            }
            out.push('{');
            rest = &tail[1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// The full set of templates used by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: Vec<PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            templates: TemplateId::ALL
                .iter()
                .map(|&id| PromptTemplate::new(id, id.default_body()))
                .collect(),
        }
    }
}

impl PromptSet {
    /// Bundled templates, overridden by any `<template_id>.txt` in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        for t in &mut set.templates {
            let path = dir.join(format!("{}.txt", t.id.name()));
            if path.exists() {
                t.body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Load {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        self.templates
            .iter()
            .find(|t| t.id == id)
            .expect("every template id is present")
    }

    pub fn set(&mut self, template: PromptTemplate) {
        if let Some(t) = self.templates.iter_mut().find(|t| t.id == template.id) {
            *t = template;
        }
    }
}

/// `[1] text` lines, one per passage, with internal line breaks flattened.
pub fn numbered_passages(docs: &[&Document]) -> String {
    if docs.is_empty() {
        return "(no passages)".to_string();
    }
    docs.iter()
        .enumerate()
        .map(|(i, d)| {
            let flat: Vec<&str> = d.text.split_whitespace().collect();
            format!("[{}] {}", i + 1, flat.join(" "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_templates_declare_expected_placeholders() {
        let set = PromptSet::default();
        assert_eq!(set.get(TemplateId::RelevanceSelection).required(), vec!["query", "numbered_passages"]);
        assert_eq!(set.get(TemplateId::PseudoAnswer).required(), vec!["query", "numbered_passages"]);
        assert_eq!(
            set.get(TemplateId::UtilitySelection).required(),
            vec!["query", "numbered_passages", "answer"]
        );
        assert_eq!(
            set.get(TemplateId::UtilityRanking).required(),
            vec!["query", "numbered_passages", "answer"]
        );
    }

    #[test]
    fn unbound_placeholder_fails() {
        let t = PromptSet::default().get(TemplateId::UtilitySelection).clone();
        let err = t
            .render(&Bindings {
                query: Some("q"),
                numbered_passages: Some("[1] x"),
                answer: None,
            })
            .unwrap_err();
        assert_eq!(
            err,
            TemplateError::Unbound {
                template: "utility_selection",
                placeholder: "answer"
            }
        );
    }

    #[test]
    fn render_substitutes_once_and_keeps_other_braces() {
        let t = PromptTemplate::new(TemplateId::RagAnswer, "Q={query} {json} A={answer}");
        let out = t
            .render(&Bindings {
                query: Some("{answer}"),
                numbered_passages: None,
                answer: Some("42"),
            })
            .unwrap();
        assert_eq!(out, "Q={answer} {json} A=42");
    }

    #[test]
    fn passages_are_numbered_from_one() {
        let a = Document::new("d7", "red\nfox");
        let b = Document::new("d9", "tax law");
        assert_eq!(numbered_passages(&[&a, &b]), "[1] red fox\n[2] tax law");
    }

    #[test]
    fn directory_overrides_individual_templates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("rag_answer.txt"), "Just {query}").unwrap();
        let set = PromptSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.get(TemplateId::RagAnswer).body, "Just {query}");
        assert_eq!(set.get(TemplateId::PseudoAnswer), PromptSet::default().get(TemplateId::PseudoAnswer));
    }
}
