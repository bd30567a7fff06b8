//! Training example builders for reconstruction, matching and topic-aware generation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dialog::{Dialog, Role};
use crate::error::{Error, Result};
use crate::keywords::format_keyword_prompt;
use crate::render::{Renderer, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Dialog reconstruction.
    Dr,
    /// Question-answer matching.
    Qam,
    /// Topic-aware dialog generation.
    Tdg,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Dr, Task::Qam, Task::Tdg];

    pub fn name(self) -> &'static str {
        match self {
            Task::Dr => "dr",
            Task::Qam => "qam",
            Task::Tdg => "tdg",
        }
    }
}

/// Target texts of the matching task.
pub struct QamTargets;

impl QamTargets {
    pub const POSITIVE: &'static str = "The answer matches the question";
    pub const NEGATIVE: &'static str = "The answer does not match the question";
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrainingExample {
    pub input_text: String,
    pub target_text: String,
    pub task: Task,
    pub source_dialog_id: String,
}

/// Reconstruction example: mask utterance `t` (sampled uniformly when `None`).
pub fn build_dr_example<R: Rng + ?Sized>(
    renderer: &Renderer,
    d: &Dialog,
    t: Option<usize>,
    rng: &mut R,
) -> Result<TrainingExample> {
    if d.len() < 2 {
        return Err(Error::InvalidDialog {
            id: d.id.clone(),
            reason: format!("reconstruction needs at least 2 utterances, got {}", d.len()),
        });
    }
    let t = match t {
        Some(t) if t >= d.len() => return Err(Error::IndexOutOfRange { index: t, len: d.len() }),
        Some(t) => t,
        None => rng.gen_range(0..d.len()),
    };
    Ok(TrainingExample {
        input_text: renderer.render_masked(d, t, None),
        target_text: d.utterances[t].text.clone(),
        task: Task::Dr,
        source_dialog_id: d.id.clone(),
    })
}

/// One positive and one same-dialog negative matching example.
///
/// The question is sampled uniformly among QA pairs; the negative answer is
/// sampled uniformly among the other pairs' answers whose text differs from
/// the positive answer.
pub fn build_qam_examples<R: Rng + ?Sized>(
    renderer: &Renderer,
    d: &Dialog,
    rng: &mut R,
) -> Result<(TrainingExample, TrainingExample)> {
    let pairs = d.qa_pairs();
    if pairs.len() < 2 {
        return Err(Error::NotEnoughPairs(d.id.clone()));
    }
    let pos = rng.gen_range(0..pairs.len());
    let positive = pairs[pos];
    let negatives: Vec<_> = pairs
        .iter()
        .enumerate()
        .filter(|(i, p)| *i != pos && p.answer.text != positive.answer.text)
        .map(|(_, p)| p.answer)
        .collect();
    let Some(negative) = negatives.choose(rng) else {
        return Err(Error::NotEnoughPairs(d.id.clone()));
    };
    let render = |answer: &str| {
        renderer.render(&[
            Segment::Turn {
                role: Role::User,
                text: &positive.question.text,
            },
            Segment::Turn {
                role: Role::Agent,
                text: answer,
            },
        ])
    };
    let make = |answer: &str, target: &str| TrainingExample {
        input_text: render(answer),
        target_text: target.to_string(),
        task: Task::Qam,
        source_dialog_id: d.id.clone(),
    };
    Ok((
        make(&positive.answer.text, QamTargets::POSITIVE),
        make(&negative.text, QamTargets::NEGATIVE),
    ))
}

/// Topic-aware example: question `t` masked with the keyword prompt before the sentinel.
pub fn build_tdg_example<S: AsRef<str>>(
    renderer: &Renderer,
    d: &Dialog,
    t: usize,
    keywords: &[S],
) -> Result<TrainingExample> {
    let u = d
        .utterances
        .get(t)
        .ok_or(Error::IndexOutOfRange { index: t, len: d.len() })?;
    if u.role != Role::User {
        return Err(Error::invalid(format!(
            "topic-aware generation must mask a question, utterance {t} of `{}` is an agent turn",
            d.id
        )));
    }
    let prompt = format_keyword_prompt(keywords)?;
    Ok(TrainingExample {
        input_text: renderer.render_masked(d, t, Some(&prompt)),
        target_text: u.text.clone(),
        task: Task::Tdg,
        source_dialog_id: d.id.clone(),
    })
}

/// Question indices that have an answer right after them.
pub fn answered_question_indices(d: &Dialog) -> Vec<usize> {
    d.qa_pairs().iter().map(|p| p.turn_index).collect()
}
