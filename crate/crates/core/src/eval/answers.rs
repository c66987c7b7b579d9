//! Answer-quality metrics: exact match, token F1 and ROUGE-L.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

/// Default ROUGE-L recall weight.
pub const ROUGE_BETA: f64 = 1.2;

fn article_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"))
}

fn strip_punctuation(s: &str) -> String {
    s.chars().filter(|c| !c.is_ascii_punctuation()).collect()
}

fn squeeze(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercase, drop punctuation and the articles a/an/the, squeeze spaces.
pub fn normalize_answer(s: &str) -> String {
    let s = strip_punctuation(&s.to_lowercase());
    squeeze(&article_re().replace_all(&s, " "))
}

/// Lowercase, drop punctuation, squeeze spaces. Articles are kept.
pub fn normalize_for_rouge(s: &str) -> String {
    squeeze(&strip_punctuation(&s.to_lowercase()))
}

fn token_f1(pred: &[&str], gold: &[&str]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// `(em, f1)`, each the maximum over the gold answers.
pub fn answer_em_f1(prediction: &str, golds: &[String]) -> (f64, f64) {
    let pred = normalize_answer(prediction);
    let pred_toks: Vec<&str> = pred.split_whitespace().collect();
    if pred_toks.is_empty() {
        return (0.0, 0.0);
    }
    let mut em: f64 = 0.0;
    let mut f1: f64 = 0.0;
    for g in golds {
        let gold = normalize_answer(g);
        if gold == pred {
            em = 1.0;
        }
        let gold_toks: Vec<&str> = gold.split_whitespace().collect();
        f1 = f1.max(token_f1(&pred_toks, &gold_toks));
    }
    (em, f1)
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure `(1 + β²)·P·R / (R + β²·P)`.
pub fn rouge_l_with_beta(prediction: &str, gold: &str, beta: f64) -> f64 {
    let p = normalize_for_rouge(prediction);
    let g = normalize_for_rouge(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&pt, &gt) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let prec = lcs / pt.len() as f64;
    let rec = lcs / gt.len() as f64;
    let b2 = beta * beta;
    (1.0 + b2) * prec * rec / (rec + b2 * prec)
}

pub fn rouge_l(prediction: &str, gold: &str) -> f64 {
    rouge_l_with_beta(prediction, gold, ROUGE_BETA)
}

/// Best ROUGE-L over several references.
pub fn rouge_l_max(prediction: &str, golds: &[String], beta: f64) -> f64 {
    golds
        .iter()
        .map(|g| rouge_l_with_beta(prediction, g, beta))
        .fold(0.0, f64::max)
}
