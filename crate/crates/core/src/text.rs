//! Whitespace normalization, tokenization and the shared stopword list.

use std::collections::HashSet;
use std::sync::OnceLock;

const STOPWORDS_RAW: &str = include_str!("../resources/stopwords.txt");

/// Collapses every run of whitespace to a single space and strips both ends.
pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn is_normalized(text: &str) -> bool {
    normalize_ws(text) == text
}

/// Parses a stopword resource: one word per line, blank lines and `#` comments ignored.
pub fn parse_stopwords(raw: &str) -> HashSet<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn default_stopwords() -> &'static HashSet<String> {
    static WORDS: OnceLock<HashSet<String>> = OnceLock::new();
    WORDS.get_or_init(|| parse_stopwords(STOPWORDS_RAW))
}

/// Word tokens with their byte offsets. A token is a run of alphanumerics,
/// allowing internal `-` and `'` between alphanumerics.
pub fn word_spans(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if c.is_alphanumeric() {
                j += 1;
            } else if (c == '-' || c == '\'' || c == '’')
                && j + 1 < chars.len()
                && chars[j + 1].1.is_alphanumeric()
            {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |c| c.0);
        out.push((start, &text[start..end]));
        i = j;
    }
    out
}

pub fn words(text: &str) -> impl Iterator<Item = &str> {
    word_spans(text).into_iter().map(|(_, w)| w)
}

/// Lowercased content words: stopwords and purely numeric tokens removed.
pub fn content_words(text: &str) -> Vec<String> {
    let stop = default_stopwords();
    words(text)
        .map(str::to_lowercase)
        .filter(|w| !stop.contains(w) && !w.chars().all(|c| c.is_ascii_digit()))
        .collect()
}

pub fn content_word_set(text: &str) -> HashSet<String> {
    content_words(text).into_iter().collect()
}
