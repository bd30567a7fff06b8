//! Sequence-to-sequence backend interface and deterministic stand-ins.
//!
//! Real encoder-decoder models plug in behind [`GeneratorBackend`]. The
//! toolkit ships [`StubBackend`] (hash-scored templates, no learning) and
//! [`RecordingBackend`] (captures generation inputs) for pipeline tests, and
//! [`crate::bow::BagOfWordsBackend`], a small trainable model.

use std::fs;
use std::hash::Hasher;
use std::path::Path;
use std::sync::Mutex;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::OptimizerConfig;
use crate::render::{Renderer, DEFAULT_SENTINEL};
use crate::rerank::Candidate;
use crate::tasks::TrainingExample;
use crate::text::content_words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub beam_size: usize,
    /// Maximum question length in words.
    pub max_length: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            beam_size: 5,
            max_length: 64,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WeightedExample<'a> {
    pub example: &'a TrainingExample,
    /// Coefficient of this example's loss in the objective.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub grad_norm: f64,
    pub lr: f64,
}

pub trait GeneratorBackend: Send + Sync {
    /// Identifier stored in checkpoint manifests.
    fn kind(&self) -> &str;

    fn mask_sentinel(&self) -> &str {
        DEFAULT_SENTINEL
    }

    fn renderer(&self) -> Renderer {
        Renderer::new(self.mask_sentinel())
    }

    /// Mean token negative log-likelihood of `target` given `input`.
    fn loss(&self, input: &str, target: &str) -> Result<f64>;

    /// At most `opts.beam_size` candidates, best model score first.
    fn generate(&self, input: &str, opts: &GenerateOptions) -> Result<Vec<Candidate>>;

    /// Adds the gradient of `Σ weight·loss` to the pending update and returns
    /// each example's unweighted loss.
    fn accumulate(&mut self, batch: &[WeightedExample<'_>]) -> Result<Vec<f64>>;

    /// Applies and clears the pending update.
    fn apply_update(&mut self, opt: &OptimizerConfig, lr: f64) -> Result<UpdateStats>;

    fn save(&self, dir: &Path) -> Result<()>;

    fn load(&mut self, dir: &Path) -> Result<()>;
}

pub(crate) fn fnv64(parts: &[&[u8]]) -> u64 {
    let mut h = FnvHasher::default();
    for p in parts {
        h.write(p);
        h.write_u8(0xff);
    }
    h.finish()
}

/// Keywords a generator should ask about: the keyword prompt before the
/// sentinel, else the first content words of the answer after it.
pub fn question_hints(renderer: &Renderer, input: &str) -> Vec<String> {
    if let Some(hint) = renderer.keyword_hint(input) {
        let kws: Vec<String> = hint
            .split(", ")
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if !kws.is_empty() {
            return kws;
        }
    }
    let answer = renderer.answer_after_mask(input).unwrap_or("");
    let mut seen = std::collections::HashSet::new();
    content_words(answer)
        .into_iter()
        .filter(|w| seen.insert(w.clone()))
        .take(2)
        .collect()
}

/// Template questions for a slot, deduplicated, in a fixed order.
pub fn template_questions(hints: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    if let Some(first) = hints.first() {
        let second = hints.get(1).filter(|s| *s != first);
        out.push(format!("What about {first}?"));
        match second {
            Some(s) => {
                out.push(format!("What do you know about {first} and {s}?"));
                out.push(format!("How does {first} relate to {s}?"));
            }
            None => {
                out.push(format!("What do you know about {first}?"));
                out.push(format!("Why is {first} important?"));
            }
        }
    }
    out.push("Are there any other interesting aspects about this article?".into());
    out.push("Can you tell me more?".into());
    let mut seen = std::collections::HashSet::new();
    out.retain(|q| seen.insert(q.clone()));
    out
}

/// Deterministic backend with hash-derived scores and template generations.
///
/// Generation scores depend only on the slot's hints and the candidate text,
/// never on the dialog history. Training calls report losses but change
/// nothing.
#[derive(Debug, Clone)]
pub struct StubBackend {
    sentinel: String,
}

impl Default for StubBackend {
    fn default() -> Self {
        Self {
            sentinel: DEFAULT_SENTINEL.into(),
        }
    }
}

impl StubBackend {
    pub const KIND: &'static str = "stub";

    pub fn with_sentinel(sentinel: &str) -> Self {
        Self {
            sentinel: sentinel.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StubState {
    sentinel: String,
}

impl GeneratorBackend for StubBackend {
    fn kind(&self) -> &str {
        Self::KIND
    }

    fn mask_sentinel(&self) -> &str {
        &self.sentinel
    }

    fn loss(&self, input: &str, target: &str) -> Result<f64> {
        let h = fnv64(&[input.as_bytes(), target.as_bytes()]);
        Ok(0.5 + (h % 4500) as f64 / 1000.0)
    }

    fn generate(&self, input: &str, opts: &GenerateOptions) -> Result<Vec<Candidate>> {
        let r = self.renderer();
        let hints = question_hints(&r, input);
        let key = hints.join("|");
        let answer = r.answer_after_mask(input).unwrap_or("");
        let mut cands: Vec<Candidate> = template_questions(&hints)
            .into_iter()
            .map(|q| {
                let h = fnv64(&[key.as_bytes(), answer.as_bytes(), q.as_bytes()]);
                let score = -((h % 10_000) as f64) / 1000.0;
                Candidate::new(q, score)
            })
            .collect();
        cands.sort_by(|a, b| b.model_score.total_cmp(&a.model_score));
        cands.truncate(opts.beam_size);
        Ok(cands)
    }

    fn accumulate(&mut self, batch: &[WeightedExample<'_>]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|w| self.loss(&w.example.input_text, &w.example.target_text))
            .collect()
    }

    fn apply_update(&mut self, _opt: &OptimizerConfig, lr: f64) -> Result<UpdateStats> {
        Ok(UpdateStats { grad_norm: 0.0, lr })
    }

    fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let state = StubState {
            sentinel: self.sentinel.clone(),
        };
        fs::write(dir.join("stub.json"), serde_json::to_vec(&state)?)?;
        Ok(())
    }

    fn load(&mut self, dir: &Path) -> Result<()> {
        let state: StubState = serde_json::from_slice(&fs::read(dir.join("stub.json"))?)?;
        self.sentinel = state.sentinel;
        Ok(())
    }
}

/// Wraps a backend and records every generation input in call order.
pub struct RecordingBackend<B> {
    pub inner: B,
    calls: Mutex<Vec<String>>,
}

impl<B> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("recording lock").clone()
    }

    pub fn clear(&self) {
        self.calls.lock().expect("recording lock").clear();
    }
}

impl<B: GeneratorBackend> GeneratorBackend for RecordingBackend<B> {
    fn kind(&self) -> &str {
        self.inner.kind()
    }

    fn mask_sentinel(&self) -> &str {
        self.inner.mask_sentinel()
    }

    fn loss(&self, input: &str, target: &str) -> Result<f64> {
        self.inner.loss(input, target)
    }

    fn generate(&self, input: &str, opts: &GenerateOptions) -> Result<Vec<Candidate>> {
        self.calls
            .lock()
            .map_err(|_| Error::Backend("recording lock poisoned".into()))?
            .push(input.to_string());
        self.inner.generate(input, opts)
    }

    fn accumulate(&mut self, batch: &[WeightedExample<'_>]) -> Result<Vec<f64>> {
        self.inner.accumulate(batch)
    }

    fn apply_update(&mut self, opt: &OptimizerConfig, lr: f64) -> Result<UpdateStats> {
        self.inner.apply_update(opt, lr)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        self.inner.save(dir)
    }

    fn load(&mut self, dir: &Path) -> Result<()> {
        self.inner.load(dir)
    }
}
