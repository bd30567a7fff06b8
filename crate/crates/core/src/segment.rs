//! Sentence segmentation of source passages.

use std::collections::HashSet;

use crate::dialog::Passage;
use crate::error::{Error, Result};
use crate::text::normalize_ws;

pub trait SentenceSegmenter: Send + Sync {
    /// Splits whitespace-normalized text into sentences. Joining the output
    /// with single spaces must reproduce the input.
    fn split(&self, normalized: &str) -> Vec<String>;
}

const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "mt", "ft", "vs", "etc", "e.g", "i.e",
    "cf", "al", "inc", "ltd", "co", "corp", "dept", "univ", "fig", "figs", "eq", "no", "nos",
    "vol", "pp", "approx", "gen", "col", "lt", "sgt", "capt", "cmdr", "gov", "sen", "rep", "rev",
    "hon", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
    "u.s", "u.k", "a.m", "p.m", "ph.d", "b.sc", "m.sc",
];

/// Terminal-punctuation splitter with an abbreviation list.
///
/// A sentence ends at `.`, `!` or `?` (optionally followed by closing quotes
/// or brackets) when whitespace follows, the next token does not start with a
/// lowercase letter, and for `.` the preceding word is not a known abbreviation.
#[derive(Debug, Clone)]
pub struct RuleSegmenter {
    abbreviations: HashSet<String>,
}

impl Default for RuleSegmenter {
    fn default() -> Self {
        Self {
            abbreviations: ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl RuleSegmenter {
    pub fn with_abbreviations<I, S>(extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut s = Self::default();
        s.abbreviations
            .extend(extra.into_iter().map(|a| a.as_ref().trim_end_matches('.').to_lowercase()));
        s
    }

    fn is_abbreviation(&self, token: &str) -> bool {
        let word = token
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .trim_end_matches('.')
            .to_lowercase();
        self.abbreviations.contains(&word)
    }
}

impl SentenceSegmenter for RuleSegmenter {
    fn split(&self, text: &str) -> Vec<String> {
        let tokens: Vec<&str> = text.split(' ').filter(|t| !t.is_empty()).collect();
        let mut out = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            current.push(tok);
            let Some(next) = tokens.get(i + 1) else { break };
            let core = tok.trim_end_matches(['"', '\'', ')', ']', '”', '’']);
            let Some(last) = core.chars().last() else { continue };
            let terminal = match last {
                '!' | '?' => true,
                '.' => !self.is_abbreviation(core),
                _ => false,
            };
            let next_lower = next
                .trim_start_matches(['"', '\'', '(', '[', '“', '‘'])
                .chars()
                .next()
                .is_some_and(char::is_lowercase);
            if terminal && !next_lower {
                out.push(current.join(" "));
                current.clear();
            }
        }
        if !current.is_empty() {
            out.push(current.join(" "));
        }
        out
    }
}

/// Normalizes `raw` and splits it into a [`Passage`].
pub fn segment_passage(
    id: &str,
    raw: &str,
    title: &str,
    segmenter: &dyn SentenceSegmenter,
) -> Result<Passage> {
    let normalized = normalize_ws(raw);
    if normalized.is_empty() {
        return Err(Error::invalid(format!("passage `{id}` is empty")));
    }
    let sentences = segmenter.split(&normalized);
    if sentences.is_empty() || sentences.iter().any(|s| s.is_empty()) {
        return Err(Error::invalid(format!("passage `{id}` produced no sentences")));
    }
    if sentences.join(" ") != normalized {
        return Err(Error::invalid(format!(
            "segmenter output for passage `{id}` does not rejoin to the input"
        )));
    }
    Ok(Passage {
        id: id.to_string(),
        title: normalize_ws(title),
        sentences,
        raw_text: raw.to_string(),
    })
}
