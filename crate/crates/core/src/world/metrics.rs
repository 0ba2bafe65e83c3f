//! Exact-match and token-overlap F1 answer scoring.

use std::collections::HashMap;

use super::WorldError;

/// Answer normalization options.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Normalization {
    /// Drop the articles `a`, `an`, `the` as whole tokens.
    pub strip_articles: bool,
}

/// Lowercases, replaces punctuation with nothing and collapses whitespace.
pub fn normalize_answer(text: &str, opts: Normalization) -> String {
    let lowered = text.to_lowercase();
    let cleaned: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    cleaned
        .split_whitespace()
        .filter(|t| !(opts.strip_articles && matches!(*t, "a" | "an" | "the")))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnswerScore {
    pub exact_match: bool,
    pub f1: f64,
}

impl AnswerScore {
    pub fn em(&self) -> f64 {
        if self.exact_match {
            1.0
        } else {
            0.0
        }
    }
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return if p == g { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    2.0 * common as f64 / (p.len() + g.len()) as f64
}

/// Scores `prediction` against every gold answer and keeps the best.
pub fn score_answer<S: AsRef<str>>(prediction: &str, golds: &[S]) -> Result<AnswerScore, WorldError> {
    score_answer_with(prediction, golds, Normalization::default())
}

pub fn score_answer_with<S: AsRef<str>>(
    prediction: &str,
    golds: &[S],
    opts: Normalization,
) -> Result<AnswerScore, WorldError> {
    if golds.is_empty() {
        return Err(WorldError::EmptyGoldSet);
    }
    let pred = normalize_answer(prediction, opts);
    let mut best = AnswerScore { exact_match: false, f1: 0.0 };
    for g in golds {
        let gold = normalize_answer(g.as_ref(), opts);
        best.exact_match |= pred == gold;
        best.f1 = best.f1.max(token_f1(&pred, &gold));
    }
    Ok(best)
}
