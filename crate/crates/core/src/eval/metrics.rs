use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::ConvQaDataset;
use crate::dialog::{Dialog, Role, Utterance};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rerank::LexicalOverlapScorer;

/// One question slot of a dialog as seen by a metric.
#[derive(Debug, Clone, Copy)]
pub struct QuestionTurn<'a> {
    pub dialog_id: &'a str,
    /// Index of the question utterance.
    pub turn_index: usize,
    /// Utterances before the question.
    pub history: &'a [Utterance],
    pub question: &'a str,
    pub answer: &'a str,
    /// Every agent utterance of the dialog joined by spaces; the source
    /// passage for generated dialogs.
    pub passage: &'a str,
}

pub trait MetricPlugin: Send + Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, turn: &QuestionTurn<'_>) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalOverlapMetric;

impl MetricPlugin for LexicalOverlapMetric {
    fn name(&self) -> &str {
        LexicalOverlapScorer::NAME
    }

    fn evaluate(&self, turn: &QuestionTurn<'_>) -> Result<f64> {
        Ok(LexicalOverlapScorer::overlap(turn.passage, turn.question, turn.answer))
    }
}

#[derive(Debug, Clone)]
pub struct ConstantMetric(pub f64);

impl MetricPlugin for ConstantMetric {
    fn name(&self) -> &str {
        "constant"
    }

    fn evaluate(&self, _: &QuestionTurn<'_>) -> Result<f64> {
        Ok(self.0)
    }
}

/// Shipped metrics by name. Model-based metrics must be supplied as plug-ins.
pub fn metric_by_name(name: &str) -> Result<Box<dyn MetricPlugin>> {
    if let Some(c) = name.strip_prefix("constant:") {
        let v: f64 = c
            .parse()
            .map_err(|_| Error::Config(format!("bad constant metric `{name}`")))?;
        return Ok(Box::new(ConstantMetric(v)));
    }
    match name {
        LexicalOverlapScorer::NAME | "lexical" => Ok(Box::new(LexicalOverlapMetric)),
        other => Err(Error::Unavailable {
            name: other.into(),
            advice: "only `lexical-overlap` and `constant:<value>` ship with the toolkit; \
                     model-based metrics are external plug-ins"
                .into(),
        }),
    }
}

/// Incremental mean; exact when every value is equal.
#[derive(Debug, Clone, Copy, Default)]
struct RunningMean {
    mean: f64,
    n: usize,
}

impl RunningMean {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.mean += (x - self.mean) / self.n as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum MetricResult {
    Ok {
        mean: f64,
        turns: usize,
        per_dialog: BTreeMap<String, f64>,
    },
    Unavailable {
        error: String,
    },
}

impl MetricResult {
    pub fn mean(&self) -> Option<f64> {
        match self {
            MetricResult::Ok { mean, .. } => Some(*mean),
            MetricResult::Unavailable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub question_turns: usize,
    pub metrics: BTreeMap<String, MetricResult>,
}

impl EvaluationReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).and_then(MetricResult::mean)
    }
}

pub fn dialog_passage(d: &Dialog) -> String {
    d.utterances
        .iter()
        .filter(|u| u.role == Role::Agent)
        .map(|u| u.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn dialog_scores(d: &Dialog, metric: &dyn MetricPlugin) -> Result<Vec<f64>> {
    let passage = dialog_passage(d);
    d.qa_pairs()
        .iter()
        .map(|p| {
            let turn = QuestionTurn {
                dialog_id: &d.id,
                turn_index: p.turn_index,
                history: &d.utterances[..p.turn_index],
                question: &p.question.text,
                answer: &p.answer.text,
                passage: &passage,
            };
            let v = metric.evaluate(&turn)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Scorer(format!("{} returned {v}", metric.name())))
            }
        })
        .collect()
}

/// Mean of every metric over all question turns, with per-dialog means.
///
/// A failing metric is reported as unavailable; the others still run.
pub fn evaluate_dataset(
    ds: &ConvQaDataset,
    metrics: &[&dyn MetricPlugin],
    exec: Execution,
) -> Result<EvaluationReport> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty dataset"));
    }
    let question_turns = ds.dialogs.iter().map(|d| d.qa_pairs().len()).sum();
    let mut out = BTreeMap::new();
    for m in metrics {
        let per: Vec<Result<Vec<f64>>> = exec.map(&ds.dialogs, |d| dialog_scores(d, *m));
        let mut total = RunningMean::default();
        let mut per_dialog = BTreeMap::new();
        let mut failure = None;
        for (d, r) in ds.dialogs.iter().zip(per) {
            match r {
                Ok(scores) => {
                    let mut dm = RunningMean::default();
                    for s in scores {
                        dm.push(s);
                        total.push(s);
                    }
                    if dm.n > 0 {
                        per_dialog.insert(d.id.clone(), dm.mean);
                    }
                }
                Err(e) => {
                    failure = Some(format!("dialog `{}`: {e}", d.id));
                    break;
                }
            }
        }
        let result = match failure {
            Some(error) => {
                log::warn!("metric {} unavailable: {error}", m.name());
                MetricResult::Unavailable { error }
            }
            None if total.n == 0 => MetricResult::Unavailable {
                error: "dataset has no question turns".into(),
            },
            None => MetricResult::Ok {
                mean: total.mean,
                turns: total.n,
                per_dialog,
            },
        };
        out.insert(m.name().to_string(), result);
    }
    Ok(EvaluationReport {
        dataset: ds.name.clone(),
        question_turns,
        metrics: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::Role;

    fn ds(dialogs: Vec<Dialog>) -> ConvQaDataset {
        ConvQaDataset::from_dialogs("t", dialogs)
    }

    #[test]
    fn constant_metric_exact() {
        let d = Dialog::alternating("a", Role::User, &["q1", "a1", "q2", "a2", "q3", "a3"]);
        let r = evaluate_dataset(&ds(vec![d]), &[&ConstantMetric(0.1)], Execution::Parallel).unwrap();
        assert_eq!(r.mean("constant"), Some(0.1));
        assert_eq!(r.question_turns, 3);
    }

    #[test]
    fn verbatim_questions_score_one() {
        let d = Dialog::alternating(
            "a",
            Role::User,
            &["The shrub grows tall.", "The shrub grows tall.", "It blooms yearly.", "It blooms yearly."],
        );
        let r = evaluate_dataset(&ds(vec![d]), &[&LexicalOverlapMetric], Execution::Sequential).unwrap();
        assert_eq!(r.mean("lexical-overlap"), Some(1.0));
    }

    #[test]
    fn hand_computed_two_dialogs() {
        // dialog a: passage content {shrub, tall, seed, regenerate}
        //   q1 {shrub, tall} vs a1 {shrub, tall}: f1 1, ctx 1 -> 1
        //   q2 {seeds} vs a2 {regenerate, seed}: f1 0, ctx 0 -> 0
        // dialog b: q {fruit, shape} vs a {fruit, round}: p 1/2 r 1/2 f1 1/2; ctx 1/2 -> 1/2
        let a = Dialog::alternating(
            "a",
            Role::User,
            &["Is the shrub tall?", "The shrub is tall.", "Seeds?", "It will regenerate from seed only."],
        );
        let b = Dialog::alternating("b", Role::User, &["What fruit shape?", "The fruit is round."]);
        let r = evaluate_dataset(&ds(vec![a, b]), &[&LexicalOverlapMetric], Execution::Parallel).unwrap();
        let mean = r.mean("lexical-overlap").unwrap();
        assert!((mean - 0.5).abs() < 1e-12, "{mean}");
        match &r.metrics["lexical-overlap"] {
            MetricResult::Ok { per_dialog, turns, .. } => {
                assert_eq!(*turns, 3);
                assert!((per_dialog["a"] - 0.5).abs() < 1e-12);
                assert!((per_dialog["b"] - 0.5).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    struct Broken;
    impl MetricPlugin for Broken {
        fn name(&self) -> &str {
            "broken"
        }
        fn evaluate(&self, _: &QuestionTurn<'_>) -> Result<f64> {
            Err(Error::Scorer("model missing".into()))
        }
    }

    #[test]
    fn failing_plugin_marked_unavailable() {
        let d = Dialog::alternating("a", Role::User, &["q", "a"]);
        let r = evaluate_dataset(&ds(vec![d]), &[&Broken, &ConstantMetric(2.0)], Execution::Sequential).unwrap();
        assert!(matches!(r.metrics["broken"], MetricResult::Unavailable { .. }));
        assert_eq!(r.mean("constant"), Some(2.0));
    }

    #[test]
    fn registry() {
        assert_eq!(metric_by_name("lexical-overlap").unwrap().name(), "lexical-overlap");
        assert!(metric_by_name("constant:0.5").is_ok());
        assert!(matches!(metric_by_name("rquge"), Err(Error::Unavailable { .. })));
    }
}
