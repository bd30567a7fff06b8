//! Core dialog value types.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{is_normalized, normalize_ws};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Agent,
}

impl Role {
    pub fn tag(self) -> &'static str {
        match self {
            Role::User => "User",
            Role::Agent => "Agent",
        }
    }

    pub fn other(self) -> Role {
        match self {
            Role::User => Role::Agent,
            Role::Agent => Role::User,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Where an utterance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    SourceSentence,
    Generated,
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Utterance {
    pub role: Role,
    pub text: String,
    pub origin: Origin,
}

impl Utterance {
    /// Builds an utterance with whitespace-normalized text.
    pub fn new(role: Role, text: &str, origin: Origin) -> Self {
        Self {
            role,
            text: normalize_ws(text),
            origin,
        }
    }

    pub fn user(text: &str) -> Self {
        Self::new(Role::User, text, Origin::Corpus)
    }

    pub fn agent(text: &str) -> Self {
        Self::new(Role::Agent, text, Origin::Corpus)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dialog {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_passage_id: Option<String>,
    pub utterances: Vec<Utterance>,
}

impl Dialog {
    pub fn new(id: impl Into<String>, utterances: Vec<Utterance>) -> Self {
        Self {
            id: id.into(),
            title: None,
            source_passage_id: None,
            utterances,
        }
    }

    /// Builds a corpus dialog from plain texts, alternating roles from `first`.
    pub fn alternating<S: AsRef<str>>(id: impl Into<String>, first: Role, texts: &[S]) -> Self {
        let mut role = first;
        let utterances = texts
            .iter()
            .map(|t| {
                let u = Utterance::new(role, t.as_ref(), Origin::Corpus);
                role = role.other();
                u
            })
            .collect();
        Self::new(id, utterances)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Question/answer pairs: every USER utterance immediately followed by an AGENT one.
    pub fn qa_pairs(&self) -> Vec<QaPair<'_>> {
        self.utterances
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].role == Role::User && w[1].role == Role::Agent)
            .map(|(i, w)| QaPair {
                question: &w[0],
                answer: &w[1],
                turn_index: i,
            })
            .collect()
    }
}

/// A question and the answer that immediately follows it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QaPair<'a> {
    pub question: &'a Utterance,
    pub answer: &'a Utterance,
    /// Index of the question within the parent dialog.
    pub turn_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DialogInvariant {
    MinLength,
    EmptyId,
    EmptyText,
    UnnormalizedText,
    RoleAlternation,
    SourceSentenceRole,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: DialogInvariant,
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "utterance {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks every dialog invariant. Never fails; violations are returned as data.
pub fn validate_dialog(d: &Dialog) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |invariant, index, message: String| {
        out.push(Violation {
            invariant,
            index,
            message,
        })
    };
    if d.id.trim().is_empty() {
        push(DialogInvariant::EmptyId, None, "dialog id is empty".into());
    }
    if d.utterances.len() < 2 {
        push(
            DialogInvariant::MinLength,
            None,
            format!("dialog has {} utterances, need at least 2", d.utterances.len()),
        );
    }
    for (i, u) in d.utterances.iter().enumerate() {
        if u.text.is_empty() {
            push(DialogInvariant::EmptyText, Some(i), "empty text".into());
        } else if !is_normalized(&u.text) {
            push(
                DialogInvariant::UnnormalizedText,
                Some(i),
                "text has leading, trailing or repeated whitespace".into(),
            );
        }
        if u.origin == Origin::SourceSentence && u.role != Role::Agent {
            push(
                DialogInvariant::SourceSentenceRole,
                Some(i),
                "source sentence must be spoken by the agent".into(),
            );
        }
        if i > 0 && d.utterances[i - 1].role == u.role {
            push(
                DialogInvariant::RoleAlternation,
                Some(i),
                format!("two consecutive {} utterances", u.role),
            );
        }
    }
    out
}

/// Returns an error describing the first violation, if any.
pub fn ensure_valid(d: &Dialog) -> Result<()> {
    match validate_dialog(d).first() {
        None => Ok(()),
        Some(v) => Err(Error::InvalidDialog {
            id: d.id.clone(),
            reason: v.to_string(),
        }),
    }
}

/// A dialog with exactly one utterance replaced by a sentinel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedDialog<'a> {
    pub base: &'a Dialog,
    pub mask_index: usize,
    pub mask_sentinel: String,
}

/// Separator used by [`MaskedDialog::render`].
pub const PLAIN_SEPARATOR: &str = " ‖ ";

impl<'a> MaskedDialog<'a> {
    pub fn masked(&self) -> &'a Utterance {
        &self.base.utterances[self.mask_index]
    }

    /// Utterance texts with the masked one replaced by the sentinel.
    pub fn texts(&self) -> Vec<&str> {
        self.base
            .utterances
            .iter()
            .enumerate()
            .map(|(i, u)| {
                if i == self.mask_index {
                    self.mask_sentinel.as_str()
                } else {
                    u.text.as_str()
                }
            })
            .collect()
    }

    /// Plain rendering without role tags, joined by [`PLAIN_SEPARATOR`].
    pub fn render(&self) -> String {
        self.texts().join(PLAIN_SEPARATOR)
    }

    /// Puts `text` back into the masked slot.
    pub fn fill(&self, text: &str) -> Dialog {
        let mut d = self.base.clone();
        d.utterances[self.mask_index].text = text.to_string();
        d
    }
}

pub fn mask_utterance<'a>(d: &'a Dialog, t: usize, sentinel: &str) -> Result<MaskedDialog<'a>> {
    if t >= d.len() {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: d.len(),
        });
    }
    Ok(MaskedDialog {
        base: d,
        mask_index: t,
        mask_sentinel: sentinel.to_string(),
    })
}

/// A source document split into sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub title: String,
    pub sentences: Vec<String>,
    pub raw_text: String,
}

impl Passage {
    /// Sentences joined with single spaces; equals the normalized raw text.
    pub fn joined(&self) -> String {
        self.sentences.join(" ")
    }
}
