//! The single text renderer shared by training examples and inference contexts.
//!
//! Training inputs (reconstruction, matching, topic-aware generation) and the
//! inference contexts fed to the generator all go through [`Renderer`], so the
//! formats seen at train and inference time cannot drift apart.

use serde::{Deserialize, Serialize};

use crate::dialog::{Dialog, Role};

/// Mask placeholder used when a backend does not configure its own.
pub const DEFAULT_SENTINEL: &str = "<extra_id_0>";

/// One piece of a rendered sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment<'a> {
    /// Free text without a role tag, e.g. the title prompt.
    Prompt(&'a str),
    Turn { role: Role, text: &'a str },
    /// The masked slot, optionally preceded by a keyword prompt.
    Masked {
        role: Role,
        keyword_prompt: Option<&'a str>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Renderer {
    pub sentinel: String,
    pub separator: String,
}

impl Default for Renderer {
    fn default() -> Self {
        Self::new(DEFAULT_SENTINEL)
    }
}

impl Renderer {
    pub fn new(sentinel: impl Into<String>) -> Self {
        Self {
            sentinel: sentinel.into(),
            separator: " ".into(),
        }
    }

    pub fn render(&self, segments: &[Segment<'_>]) -> String {
        let parts: Vec<String> = segments
            .iter()
            .map(|s| match s {
                Segment::Prompt(text) => (*text).to_string(),
                Segment::Turn { role, text } => format!("{}: {text}", role.tag()),
                Segment::Masked {
                    role,
                    keyword_prompt: Some(k),
                } => format!("{}: {k}{}{}", role.tag(), self.separator, self.sentinel),
                Segment::Masked {
                    role,
                    keyword_prompt: None,
                } => format!("{}: {}", role.tag(), self.sentinel),
            })
            .collect();
        parts.join(&self.separator)
    }

    /// Segments of `d` with utterance `mask` replaced by the sentinel.
    pub fn dialog_segments<'a>(
        &self,
        d: &'a Dialog,
        mask: Option<usize>,
        keyword_prompt: Option<&'a str>,
    ) -> Vec<Segment<'a>> {
        d.utterances
            .iter()
            .enumerate()
            .map(|(i, u)| {
                if Some(i) == mask {
                    Segment::Masked {
                        role: u.role,
                        keyword_prompt,
                    }
                } else {
                    Segment::Turn {
                        role: u.role,
                        text: &u.text,
                    }
                }
            })
            .collect()
    }

    /// Full dialog without any mask.
    pub fn render_dialog(&self, d: &Dialog) -> String {
        self.render(&self.dialog_segments(d, None, None))
    }

    pub fn render_masked(&self, d: &Dialog, t: usize, keyword_prompt: Option<&str>) -> String {
        self.render(&self.dialog_segments(d, Some(t), keyword_prompt))
    }

    /// Undoes the masking: strips the keyword prompt and substitutes `text` for the sentinel.
    pub fn unmask(&self, rendered: &str, text: &str, keyword_prompt: Option<&str>) -> String {
        let slot = match keyword_prompt {
            Some(k) => format!("{k}{}{}", self.separator, self.sentinel),
            None => self.sentinel.clone(),
        };
        rendered.replacen(&slot, text, 1)
    }

    /// Text of the keyword prompt that immediately precedes the sentinel, if any.
    pub fn keyword_hint<'a>(&self, input: &'a str) -> Option<&'a str> {
        let pos = input.find(&self.sentinel)?;
        let before = input[..pos].strip_suffix(self.separator.as_str())?;
        let start = before.rfind(crate::keywords::KEYWORD_PREFIX)?;
        Some(&before[start + crate::keywords::KEYWORD_PREFIX.len()..])
    }

    /// The utterance rendered right after the sentinel, without its role tag.
    pub fn answer_after_mask<'a>(&self, input: &'a str) -> Option<&'a str> {
        let pos = input.find(&self.sentinel)?;
        let rest = input[pos + self.sentinel.len()..].strip_prefix(self.separator.as_str())?;
        let rest = rest
            .strip_prefix("Agent: ")
            .or_else(|| rest.strip_prefix("User: "))
            .unwrap_or(rest);
        let end = [" User: ", " Agent: "]
            .iter()
            .filter_map(|m| rest.find(m))
            .min()
            .unwrap_or(rest.len());
        Some(&rest[..end])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qa() -> Dialog {
        Dialog::alternating("d", Role::User, &["q", "a"])
    }

    #[test]
    fn two_turn_mask_render() {
        let r = Renderer::new("<mask>");
        assert_eq!(r.render_masked(&qa(), 0, None), "User: <mask> Agent: a");
        assert_eq!(r.render_dialog(&qa()), "User: q Agent: a");
    }

    #[test]
    fn keyword_prompt_precedes_sentinel() {
        let r = Renderer::new("<mask>");
        let s = r.render_masked(&qa(), 0, Some("Keyword: x, y"));
        assert_eq!(s, "User: Keyword: x, y <mask> Agent: a");
        assert_eq!(r.keyword_hint(&s), Some("x, y"));
        assert_eq!(r.answer_after_mask(&s), Some("a"));
        assert_eq!(r.unmask(&s, "q", Some("Keyword: x, y")), r.render_dialog(&qa()));
    }

    #[test]
    fn hint_absent_without_prompt() {
        let r = Renderer::default();
        let s = r.render_masked(&qa(), 0, None);
        assert_eq!(r.keyword_hint(&s), None);
        assert_eq!(r.answer_after_mask(&s), Some("a"));
    }
}
