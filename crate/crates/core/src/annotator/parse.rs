//! Extraction of passage references from free-form LLM replies.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no passage identifier found in response")]
    NoIds,
}

fn bracket_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[\s*([^\[\]\s]+)\s*\]").expect("valid regex"))
}

fn listed_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // "2", "- 2.", "passage 3)", "#4:" and "1, 3 > 2"
    RE.get_or_init(|| {
        Regex::new(r"(?i)^(?:[-*\u{2022}]\s*)?(?:passage\s*)?#?(\d+(?:\s*[,>]\s*\d+|\s+\d+)*)\s*[.):]?$")
            .expect("valid regex")
    })
}

enum Token {
    Index(usize),
    Id(String),
}

fn classify(raw: &str, valid: &HashSet<&str>) -> Option<Token> {
    if let Ok(i) = raw.parse::<usize>() {
        return Some(Token::Index(i));
    }
    if valid.contains(raw) {
        return Some(Token::Id(raw.to_string()));
    }
    None
}

fn tokens(raw: &str, valid: &HashSet<&str>) -> Vec<Token> {
    let bracketed: Vec<Token> = bracket_re()
        .captures_iter(raw)
        .filter_map(|c| classify(&c[1], valid))
        .collect();
    if !bracketed.is_empty() {
        return bracketed;
    }
    let mut listed = Vec::new();
    for line in raw.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = listed_line_re().captures(line) {
            listed.extend(
                c[1].split(|ch: char| ch == ',' || ch == '>' || ch.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .filter_map(|s| s.parse().ok())
                    .map(Token::Index),
            );
        } else if let Some(t) = classify(line.trim_start_matches(['-', '*']).trim(), valid) {
            listed.push(t);
        }
    }
    listed
}

/// Parses passage references out of `raw`.
///
/// `numbering[i]` is the doc id shown as `[i + 1]` in the prompt. Bracketed
/// references win over line-listed ones; numbers map through `numbering`,
/// literal doc ids are accepted as-is. Out-of-range references are dropped
/// and duplicates keep their first position.
pub fn parse_id_list(raw: &str, numbering: &[String]) -> Result<Vec<String>, ParseError> {
    let valid: HashSet<&str> = numbering.iter().map(String::as_str).collect();
    let toks = tokens(raw, &valid);
    if toks.is_empty() {
        return Err(ParseError::NoIds);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in toks {
        let id = match t {
            Token::Index(i) if (1..=numbering.len()).contains(&i) => numbering[i - 1].clone(),
            Token::Index(i) => {
                log::warn!("dropping out-of-range passage reference [{i}]");
                continue;
            }
            Token::Id(id) => id,
        };
        if seen.insert(id.clone()) {
            out.push(id);
        } else {
            log::debug!("dropping repeated passage reference {id}");
        }
    }
    Ok(out)
}

/// Renders doc ids back to prompt-local bracket references.
pub fn render_id_list(ids: &[String], numbering: &[String]) -> String {
    ids.iter()
        .filter_map(|id| numbering.iter().position(|n| n == id))
        .map(|i| format!("[{}]", i + 1))
        .collect::<Vec<_>>()
        .join(", ")
}

/// True for replies that explicitly select nothing.
pub fn is_empty_selection(raw: &str) -> bool {
    let lower = raw.trim().to_lowercase();
    let lower = lower.trim_matches(|c: char| c == '"' || c == '.' || c.is_whitespace());
    lower.contains("none of the passages")
        || lower == "none"
        || lower == "[]"
        || lower.starts_with("no passage")
}
