//! Answer keyword extraction and the keyword prompt.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::text::{default_stopwords, normalize_ws, parse_stopwords, word_spans};

pub const KEYWORD_PREFIX: &str = "Keyword: ";
pub const DEFAULT_MAX_KEYWORDS: usize = 3;

/// Extracts "what to ask" hints from an answer.
///
/// Output has at most `max_keywords` entries, each a substring of the
/// normalized input, and is deterministic for a fixed input.
pub trait KeywordExtractor: Send + Sync {
    fn extract(&self, text: &str, max_keywords: usize) -> Vec<String>;

    /// Like [`extract`](Self::extract) but may use surrounding sentences
    /// (the rest of the passage or dialog) as term statistics.
    fn extract_in_context(&self, text: &str, _context: &[&str], max_keywords: usize) -> Vec<String> {
        self.extract(text, max_keywords)
    }
}

/// Stopword-filtered term scorer.
///
/// Each content word is scored by its frequency in the text, weighted by an
/// inverse document frequency over context sentences when they are given.
/// Ties keep first-occurrence order. Keywords keep the casing of their first
/// occurrence.
#[derive(Debug, Clone)]
pub struct StatisticalExtractor {
    stopwords: HashSet<String>,
    min_len: usize,
}

impl Default for StatisticalExtractor {
    fn default() -> Self {
        Self {
            stopwords: default_stopwords().clone(),
            min_len: 2,
        }
    }
}

impl StatisticalExtractor {
    pub fn with_stopwords(raw: &str) -> Self {
        Self {
            stopwords: parse_stopwords(raw),
            ..Self::default()
        }
    }

    fn candidates(&self, text: &str) -> Vec<(String, String, usize)> {
        // (lowercase key, surface form, count) in first-occurrence order
        let mut order: Vec<(String, String, usize)> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (_, w) in word_spans(text) {
            let key = w.to_lowercase();
            if key.chars().count() < self.min_len
                || self.stopwords.contains(&key)
                || key.chars().all(|c| c.is_ascii_digit())
            {
                continue;
            }
            match index.get(&key) {
                Some(&i) => order[i].2 += 1,
                None => {
                    index.insert(key.clone(), order.len());
                    order.push((key, w.to_string(), 1));
                }
            }
        }
        order
    }

    fn ranked(&self, text: &str, context: &[&str], max_keywords: usize) -> Vec<String> {
        let text = normalize_ws(text);
        let cands = self.candidates(&text);
        let n_docs = context.len() as f64;
        let ctx_sets: Vec<HashSet<String>> = context
            .iter()
            .map(|s| word_spans(s).into_iter().map(|(_, w)| w.to_lowercase()).collect())
            .collect();
        let mut scored: Vec<(usize, f64, String)> = cands
            .into_iter()
            .enumerate()
            .map(|(pos, (key, surface, tf))| {
                let idf = if context.is_empty() {
                    1.0
                } else {
                    let df = ctx_sets.iter().filter(|s| s.contains(&key)).count() as f64;
                    ((n_docs + 1.0) / (df + 1.0)).ln() + 1.0
                };
                (pos, tf as f64 * idf, surface)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(max_keywords)
            .map(|(_, _, s)| s)
            .collect()
    }
}

impl KeywordExtractor for StatisticalExtractor {
    fn extract(&self, text: &str, max_keywords: usize) -> Vec<String> {
        self.ranked(text, &[], max_keywords)
    }

    fn extract_in_context(&self, text: &str, context: &[&str], max_keywords: usize) -> Vec<String> {
        self.ranked(text, context, max_keywords)
    }
}

/// `"Keyword: " + keywords joined by ", "`, each keyword whitespace-normalized.
pub fn format_keyword_prompt<S: AsRef<str>>(keywords: &[S]) -> Result<String> {
    let cleaned: Vec<String> = keywords
        .iter()
        .map(|k| normalize_ws(k.as_ref()))
        .filter(|k| !k.is_empty())
        .collect();
    if cleaned.is_empty() {
        return Err(Error::invalid("keyword prompt needs at least one keyword"));
    }
    Ok(format!("{KEYWORD_PREFIX}{}", cleaned.join(", ")))
}
