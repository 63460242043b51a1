//! ROUGE-L and BLEU-4 for comparing generated captions with references.
//!
//! Tokenization lowercases (Unicode-aware), splits on whitespace, and emits
//! every character that is neither alphanumeric nor whitespace as its own
//! token. `"Don't stop!"` becomes `["don", "'", "t", "stop", "!"]`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextMetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("no non-empty reference")]
    NoReferences,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokenize(text: &str) -> Self {
        let mut tokens = Vec::new();
        let mut word = String::new();
        for ch in text.chars() {
            if ch.is_whitespace() {
                flush(&mut word, &mut tokens);
            } else if ch.is_alphanumeric() {
                word.extend(ch.to_lowercase());
            } else {
                flush(&mut word, &mut tokens);
                tokens.push(ch.to_lowercase().collect());
            }
        }
        flush(&mut word, &mut tokens);
        Self(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn flush(word: &mut String, tokens: &mut Vec<String>) {
    if !word.is_empty() {
        tokens.push(core::mem::take(word));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> Result<RougeL, TextMetricError> {
    if reference.is_empty() {
        return Err(TextMetricError::EmptyReference);
    }
    let l = lcs_len(&candidate.0, &reference.0);
    if l == 0 {
        return Ok(RougeL {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        });
    }
    let precision = l as f64 / candidate.len() as f64;
    let recall = l as f64 / reference.len() as f64;
    Ok(RougeL {
        precision,
        recall,
        f1: 2.0 * precision * recall / (precision + recall),
    })
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU with n-gram orders 1..=4, uniform weights and clipped counts.
///
/// Orders for which the candidate has no n-grams are left out of the
/// geometric mean instead of zeroing the score, so captions shorter than four
/// tokens still get a non-trivial value. Empty references are ignored; the
/// brevity penalty uses the reference length closest to the candidate length
/// (shorter wins ties).
pub fn bleu4(candidate: &TokenSequence, references: &[TokenSequence]) -> Result<f64, TextMetricError> {
    let refs: Vec<&TokenSequence> = references.iter().filter(|r| !r.is_empty()).collect();
    if refs.is_empty() {
        return Err(TextMetricError::NoReferences);
    }
    let c = candidate.len();
    if c == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=4 {
        let cand = ngram_counts(&candidate.0, n);
        let total: usize = cand.values().sum();
        if total == 0 {
            continue;
        }
        let mut max_ref: BTreeMap<&[String], usize> = BTreeMap::new();
        for r in &refs {
            for (g, k) in ngram_counts(&r.0, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(k);
            }
        }
        let clipped: usize = cand
            .iter()
            .map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return Ok(0.0);
        }
        log_sum += libm::log(clipped as f64 / total as f64);
        orders += 1;
    }
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(c);
    let bp = if c < r {
        libm::exp(1.0 - r as f64 / c as f64)
    } else {
        1.0
    };
    Ok((bp * libm::exp(log_sum / orders as f64)).clamp(0.0, 1.0))
}
