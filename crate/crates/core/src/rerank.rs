//! Beam candidates and contextual-relevance re-ranking.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::text::{content_word_set, normalize_ws};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub model_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance_score: Option<f64>,
}

impl Candidate {
    pub fn new(text: impl Into<String>, model_score: f64) -> Self {
        Self {
            text: text.into(),
            model_score,
            relevance_score: None,
        }
    }
}

/// Beam candidates for one masked slot, best model score first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Candidate>", into = "Vec<Candidate>")]
pub struct CandidateSet {
    candidates: Vec<Candidate>,
}

impl CandidateSet {
    /// Validates that the set is non-empty, every text is normalized and
    /// non-empty, and model scores are non-increasing.
    pub fn new(candidates: Vec<Candidate>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::invalid("candidate set is empty"));
        }
        for (i, c) in candidates.iter().enumerate() {
            if c.text.is_empty() || normalize_ws(&c.text) != c.text {
                return Err(Error::invalid(format!(
                    "candidate {i} has empty or unnormalized text {:?}",
                    c.text
                )));
            }
            if c.model_score.is_nan() {
                return Err(Error::invalid(format!("candidate {i} has NaN model score")));
            }
        }
        if let Some(i) = candidates
            .windows(2)
            .position(|w| w[1].model_score > w[0].model_score)
        {
            return Err(Error::invalid(format!(
                "model scores increase between candidates {i} and {}",
                i + 1
            )));
        }
        Ok(Self { candidates })
    }

    /// Sorts by model score (stable, descending) before validating.
    pub fn from_unsorted(mut candidates: Vec<Candidate>) -> Result<Self> {
        candidates.sort_by(|a, b| b.model_score.total_cmp(&a.model_score));
        Self::new(candidates)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Candidate> {
        self.candidates.get(i)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Candidate> {
        self.candidates.iter()
    }

    pub fn as_slice(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn truncate(&mut self, k: usize) {
        self.candidates.truncate(k.max(1));
    }
}

impl TryFrom<Vec<Candidate>> for CandidateSet {
    type Error = Error;

    fn try_from(v: Vec<Candidate>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CandidateSet> for Vec<Candidate> {
    fn from(c: CandidateSet) -> Self {
        c.candidates
    }
}

/// Candidates of one question slot and the index that was used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnCandidates {
    pub selected: usize,
    pub candidates: CandidateSet,
}

/// Scores how relevant a question is to a passage and its answer.
///
/// Implementations must be deterministic and defined for all non-empty inputs.
pub trait RelevanceScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, context: &str, question: &str, answer: &str) -> Result<f64>;
}

/// Content-word overlap scorer.
///
/// The score is the mean of the question/answer F1 over content-word sets and
/// the fraction of question content words that occur in the context. A
/// question with no content words scores 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalOverlapScorer;

impl LexicalOverlapScorer {
    pub const NAME: &'static str = "lexical-overlap";

    pub fn overlap(context: &str, question: &str, answer: &str) -> f64 {
        let q = content_word_set(question);
        if q.is_empty() {
            return 0.0;
        }
        let a = content_word_set(answer);
        let c = content_word_set(context);
        let qa = q.intersection(&a).count() as f64;
        let f1 = if qa == 0.0 {
            0.0
        } else {
            let p = qa / q.len() as f64;
            let r = qa / a.len() as f64;
            2.0 * p * r / (p + r)
        };
        let ctx = q.intersection(&c).count() as f64 / q.len() as f64;
        (f1 + ctx) / 2.0
    }
}

impl RelevanceScorer for LexicalOverlapScorer {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn score(&self, context: &str, question: &str, answer: &str) -> Result<f64> {
        Ok(Self::overlap(context, question, answer))
    }
}

/// Looks up a shipped scorer by name.
pub fn scorer_by_name(name: &str) -> Result<Box<dyn RelevanceScorer>> {
    match name {
        LexicalOverlapScorer::NAME | "lexical" => Ok(Box::new(LexicalOverlapScorer)),
        other => Err(Error::Unavailable {
            name: other.to_string(),
            advice: format!(
                "no scorer plug-in registered under this name; shipped scorers: {}",
                LexicalOverlapScorer::NAME
            ),
        }),
    }
}

/// Scores every candidate and selects the highest relevance.
///
/// Ties go to the lowest index, i.e. the best model score. Any scorer
/// failure aborts the whole selection.
pub fn rerank(
    cs: &CandidateSet,
    scorer: &dyn RelevanceScorer,
    context: &str,
    answer: &str,
    exec: Execution,
) -> Result<(usize, CandidateSet)> {
    let scores: Vec<Result<f64>> = exec.map(cs.as_slice(), |c| {
        scorer.score(context, &c.text, answer)
    });
    let mut scored = Vec::with_capacity(cs.len());
    for (c, s) in cs.iter().zip(scores) {
        let s = s?;
        if !s.is_finite() {
            return Err(Error::Scorer(format!(
                "{} returned non-finite score {s} for {:?}",
                scorer.name(),
                c.text
            )));
        }
        scored.push(Candidate {
            relevance_score: Some(s),
            ..c.clone()
        });
    }
    let selected = select_max(scored.iter().map(|c| c.relevance_score.unwrap_or(f64::MIN)));
    Ok((selected, CandidateSet { candidates: scored }))
}

/// Index of the first maximum.
pub fn select_max(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if i == 0 || s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Distinct candidate texts, in order.
pub fn distinct_texts(cs: &CandidateSet) -> Vec<&str> {
    let mut seen = HashSet::new();
    cs.iter()
        .map(|c| c.text.as_str())
        .filter(|t| seen.insert(*t))
        .collect()
}
