//! Passage-to-dialog inference: fill one question slot at a time, left to right.
//!
//! At step `t` the generator sees the title prompt, every completed
//! (question, answer) pair, the keyword prompt for `s_t`, the mask and `s_t`.
//! Keyword prompts of earlier steps are not carried into later contexts.

use serde::{Deserialize, Serialize};

use crate::backend::{GenerateOptions, GeneratorBackend};
use crate::corpus::{build_title_prompt_with, TITLE_PROMPT_TEMPLATE};
use crate::dataset::{ConvQaDataset, DialogMeta};
use crate::dialog::{Dialog, Origin, Passage, Role, Utterance};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::keywords::{format_keyword_prompt, KeywordExtractor, DEFAULT_MAX_KEYWORDS};
use crate::render::{Renderer, Segment};
use crate::rerank::{rerank, CandidateSet, RelevanceScorer, TurnCandidates};
use crate::text::normalize_ws;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceContext {
    pub prompt_text: String,
    pub completed: Vec<(String, String)>,
    pub next_answer: String,
    /// Absent when the answer has no content words to extract.
    pub keyword_prompt: Option<String>,
    pub mask_sentinel: String,
}

impl InferenceContext {
    pub fn segments(&self) -> Vec<Segment<'_>> {
        let mut segs = vec![Segment::Prompt(&self.prompt_text)];
        for (q, a) in &self.completed {
            segs.push(Segment::Turn { role: Role::User, text: q });
            segs.push(Segment::Turn { role: Role::Agent, text: a });
        }
        segs.push(Segment::Masked {
            role: Role::User,
            keyword_prompt: self.keyword_prompt.as_deref(),
        });
        segs.push(Segment::Turn {
            role: Role::Agent,
            text: &self.next_answer,
        });
        segs
    }

    pub fn render(&self, renderer: &Renderer) -> String {
        renderer.render(&self.segments())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub beam_size: usize,
    /// In words.
    pub max_question_length: usize,
    pub rerank: bool,
    pub candidate_retention: bool,
    pub max_keywords: usize,
    pub title_template: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            beam_size: 5,
            max_question_length: 64,
            rerank: true,
            candidate_retention: false,
            max_keywords: DEFAULT_MAX_KEYWORDS,
            title_template: TITLE_PROMPT_TEMPLATE.into(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be >= 1".into()));
        }
        if self.max_question_length == 0 || self.max_keywords == 0 {
            return Err(Error::Config("max_question_length and max_keywords must be >= 1".into()));
        }
        Ok(())
    }
}

/// Context for filling slot `t` of `passage` given `t` completed questions.
pub fn build_context<S: AsRef<str>>(
    passage: &Passage,
    t: usize,
    history: &[String],
    keywords: &[S],
    cfg: &GenerationConfig,
    sentinel: &str,
) -> Result<InferenceContext> {
    if t >= passage.sentences.len() {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: passage.sentences.len(),
        });
    }
    if history.len() != t {
        return Err(Error::invalid(format!(
            "slot {t} needs {t} completed questions, got {}",
            history.len()
        )));
    }
    let completed = history
        .iter()
        .zip(&passage.sentences)
        .map(|(q, a)| (q.clone(), a.clone()))
        .collect();
    let keyword_prompt = if keywords.is_empty() {
        None
    } else {
        Some(format_keyword_prompt(keywords)?)
    };
    Ok(InferenceContext {
        prompt_text: build_title_prompt_with(&cfg.title_template, &passage.title)?,
        completed,
        next_answer: passage.sentences[t].clone(),
        keyword_prompt,
        mask_sentinel: sentinel.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintedDialog {
    pub dialog: Dialog,
    pub prompt_text: String,
    pub keywords: Vec<Vec<String>>,
    pub turns: Vec<TurnCandidates>,
}

fn clip_words(text: &str, max: usize) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= max {
        words.join(" ")
    } else {
        words[..max].join(" ")
    }
}

/// Turns a passage into a dialog of `2T` utterances: generated questions at
/// even indices, the passage sentences verbatim at odd indices.
pub fn inpaint_passage<B: GeneratorBackend + ?Sized>(
    passage: &Passage,
    backend: &B,
    extractor: &dyn KeywordExtractor,
    scorer: Option<&dyn RelevanceScorer>,
    cfg: &GenerationConfig,
) -> Result<InpaintedDialog> {
    cfg.validate()?;
    if passage.sentences.is_empty() {
        return Err(Error::invalid(format!("passage `{}` has no sentences", passage.id)));
    }
    let scorer = if cfg.rerank {
        Some(scorer.ok_or_else(|| Error::Config("re-ranking is enabled but no scorer was given".into()))?)
    } else {
        None
    };
    let renderer = backend.renderer();
    let opts = GenerateOptions {
        beam_size: cfg.beam_size,
        max_length: cfg.max_question_length,
    };
    let context_sentences: Vec<&str> = passage.sentences.iter().map(String::as_str).collect();
    let passage_text = passage.joined();
    let mut questions: Vec<String> = Vec::with_capacity(passage.sentences.len());
    let mut keywords = Vec::with_capacity(passage.sentences.len());
    let mut turns = Vec::with_capacity(passage.sentences.len());

    for (t, answer) in passage.sentences.iter().enumerate() {
        let kws = extractor.extract_in_context(answer, &context_sentences, cfg.max_keywords);
        let ctx = build_context(passage, t, &questions, &kws, cfg, backend.mask_sentinel())?;
        let input = ctx.render(&renderer);
        let raw = backend.generate(&input, &opts)?;
        if raw.is_empty() {
            return Err(Error::NoCandidates {
                passage_id: passage.id.clone(),
                turn: t,
            });
        }
        let raw: Vec<_> = raw
            .into_iter()
            .take(cfg.beam_size)
            .map(|mut c| {
                c.text = clip_words(&normalize_ws(&c.text), cfg.max_question_length);
                c
            })
            .filter(|c| !c.text.is_empty())
            .collect();
        if raw.is_empty() {
            return Err(Error::NoCandidates {
                passage_id: passage.id.clone(),
                turn: t,
            });
        }
        let set = CandidateSet::new(raw).map_err(|e| Error::Backend(format!(
            "passage `{}` turn {t}: {e}",
            passage.id
        )))?;
        let (selected, set) = match scorer {
            Some(s) => rerank(&set, s, &passage_text, answer, Execution::Sequential)?,
            None => (0, set),
        };
        questions.push(set.get(selected).expect("selected index in range").text.clone());
        keywords.push(kws);
        turns.push(TurnCandidates {
            selected,
            candidates: set,
        });
    }

    let utterances = questions
        .iter()
        .zip(&passage.sentences)
        .flat_map(|(q, a)| {
            [
                Utterance {
                    role: Role::User,
                    text: q.clone(),
                    origin: Origin::Generated,
                },
                Utterance {
                    role: Role::Agent,
                    text: a.clone(),
                    origin: Origin::SourceSentence,
                },
            ]
        })
        .collect();
    let mut dialog = Dialog::new(passage.id.clone(), utterances);
    dialog.title = Some(passage.title.clone());
    dialog.source_passage_id = Some(passage.id.clone());
    Ok(InpaintedDialog {
        dialog,
        prompt_text: build_title_prompt_with(&cfg.title_template, &passage.title)?,
        keywords,
        turns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageFailure {
    pub passage_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct CorpusRun {
    pub dataset: ConvQaDataset,
    pub failures: Vec<PassageFailure>,
}

/// Inpaints every passage (in parallel across passages) into one dataset.
///
/// Dialogs keep input order. Per-passage failures are recorded; more than 1%
/// failed fails the run.
pub fn inpaint_corpus<B: GeneratorBackend + ?Sized>(
    name: &str,
    passages: &[Passage],
    backend: &B,
    extractor: &dyn KeywordExtractor,
    scorer: Option<&dyn RelevanceScorer>,
    cfg: &GenerationConfig,
    exec: Execution,
) -> Result<CorpusRun> {
    if passages.is_empty() {
        return Err(Error::invalid("no passages to inpaint"));
    }
    cfg.validate()?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = passages.iter().find(|p| !seen.insert(p.id.as_str())) {
        return Err(Error::DuplicateId(dup.id.clone()));
    }
    let results = exec.map(passages, |p| inpaint_passage(p, backend, extractor, scorer, cfg));
    let mut dataset = ConvQaDataset::new(name);
    let mut failures = Vec::new();
    for (p, r) in passages.iter().zip(results) {
        match r {
            Ok(out) => {
                let meta = DialogMeta {
                    prompt_text: Some(out.prompt_text),
                    keywords: out.keywords,
                    candidates: if cfg.candidate_retention { out.turns } else { Vec::new() },
                };
                dataset.push(out.dialog, meta);
            }
            Err(e) => {
                log::warn!("passage `{}` failed: {e}", p.id);
                failures.push(PassageFailure {
                    passage_id: p.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    log::info!(
        "{name}: {} passages done, {} failed",
        dataset.len(),
        failures.len()
    );
    if failures.len() * 100 > passages.len() {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: passages.len(),
        });
    }
    Ok(CorpusRun { dataset, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{RecordingBackend, StubBackend};
    use crate::keywords::StatisticalExtractor;
    use crate::rerank::LexicalOverlapScorer;
    use crate::segment::{segment_passage, RuleSegmenter};

    fn passage(text: &str) -> Passage {
        segment_passage("p1", text, "Grevillea rudis", &RuleSegmenter::default()).unwrap()
    }

    fn greedy() -> GenerationConfig {
        GenerationConfig {
            rerank: false,
            ..Default::default()
        }
    }

    #[test]
    fn first_step_context_shape() {
        let p = passage("It is a shrub. It will regenerate from seed only.");
        let ctx = build_context(&p, 0, &[], &["shrub"], &greedy(), "<m>").unwrap();
        assert_eq!(
            ctx.render(&Renderer::new("<m>")),
            "Hello, I want to learn about Grevillea rudis. User: Keyword: shrub <m> Agent: It is a shrub."
        );
    }

    #[test]
    fn second_step_carries_first_pair_and_drops_old_keywords() {
        let p = passage("It is a shrub. It will regenerate from seed only.");
        let ctx = build_context(&p, 1, &["What is it?".to_string()], &["regenerate", "seed"], &greedy(), "<m>").unwrap();
        assert_eq!(
            ctx.render(&Renderer::new("<m>")),
            "Hello, I want to learn about Grevillea rudis. User: What is it? Agent: It is a shrub. \
             User: Keyword: regenerate, seed <m> Agent: It will regenerate from seed only."
        );
    }

    #[test]
    fn context_errors() {
        let p = passage("One. Two.");
        assert!(build_context(&p, 1, &[], &["x"], &greedy(), "<m>").is_err());
        assert!(build_context(&p, 2, &["a".into(), "b".into()], &["x"], &greedy(), "<m>").is_err());
    }

    #[test]
    fn single_sentence_passage() {
        let p = passage("It will regenerate from seed only.");
        let b = StubBackend::default();
        let out = inpaint_passage(&p, &b, &StatisticalExtractor::default(), None, &greedy()).unwrap();
        assert_eq!(out.dialog.len(), 2);
        let input = build_context(&p, 0, &[], &["regenerate", "seed"], &greedy(), b.mask_sentinel())
            .unwrap()
            .render(&b.renderer());
        let expected = &b.generate(&input, &GenerateOptions::default()).unwrap()[0].text;
        assert_eq!(&out.dialog.utterances[0].text, expected);
        assert_eq!(out.dialog.utterances[1].origin, Origin::SourceSentence);
    }

    #[test]
    fn autoregressive_calls_see_previous_selection() {
        let p = passage("The shrub is tall. It has lobed leaves. It will regenerate from seed only.");
        let b = RecordingBackend::new(StubBackend::default());
        let cfg = GenerationConfig::default();
        let out = inpaint_passage(&p, &b, &StatisticalExtractor::default(), Some(&LexicalOverlapScorer), &cfg).unwrap();
        let calls = b.calls();
        assert_eq!(calls.len(), 3);
        for t in 1..3 {
            let prev = &out.dialog.utterances[2 * (t - 1)].text;
            assert!(calls[t].contains(&format!("User: {prev} Agent:")));
        }
    }

    #[test]
    fn greedy_beam_one_equals_beam_five_first() {
        let p = passage("The shrub is tall. It has lobed leaves. It will regenerate from seed only.");
        let b = StubBackend::default();
        let e = StatisticalExtractor::default();
        let one = inpaint_passage(&p, &b, &e, None, &GenerationConfig { beam_size: 1, ..greedy() }).unwrap();
        let five = inpaint_passage(&p, &b, &e, None, &greedy()).unwrap();
        assert_eq!(one.dialog, five.dialog);
    }

    struct Empty;
    impl GeneratorBackend for Empty {
        fn kind(&self) -> &str { "empty" }
        fn loss(&self, _: &str, _: &str) -> Result<f64> { Ok(0.0) }
        fn generate(&self, _: &str, _: &GenerateOptions) -> Result<Vec<crate::rerank::Candidate>> { Ok(vec![]) }
        fn accumulate(&mut self, _: &[crate::backend::WeightedExample<'_>]) -> Result<Vec<f64>> { Ok(vec![]) }
        fn apply_update(&mut self, _: &crate::optim::OptimizerConfig, _: f64) -> Result<crate::backend::UpdateStats> { Ok(Default::default()) }
        fn save(&self, _: &std::path::Path) -> Result<()> { Ok(()) }
        fn load(&mut self, _: &std::path::Path) -> Result<()> { Ok(()) }
    }

    #[test]
    fn zero_candidates_names_passage_and_turn() {
        let p = passage("One sentence.");
        match inpaint_passage(&p, &Empty, &StatisticalExtractor::default(), None, &greedy()) {
            Err(Error::NoCandidates { passage_id, turn }) => {
                assert_eq!(passage_id, "p1");
                assert_eq!(turn, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            inpaint_corpus("x", &[p], &Empty, &StatisticalExtractor::default(), None, &greedy(), Execution::Sequential),
            Err(Error::TooManyFailures { failed: 1, total: 1 })
        ));
    }

    #[test]
    fn rerank_requires_scorer() {
        let p = passage("One sentence.");
        assert!(inpaint_passage(&p, &StubBackend::default(), &StatisticalExtractor::default(), None, &GenerationConfig::default()).is_err());
    }

    #[test]
    fn question_length_is_clipped() {
        let p = passage("It will regenerate from seed only.");
        let cfg = GenerationConfig { max_question_length: 2, ..greedy() };
        let out = inpaint_passage(&p, &StubBackend::default(), &StatisticalExtractor::default(), None, &cfg).unwrap();
        assert!(out.dialog.utterances[0].text.split(' ').count() <= 2);
    }
}
