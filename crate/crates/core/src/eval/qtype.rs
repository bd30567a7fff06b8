//! Question-type profiling over a merged question taxonomy.
//!
//! The 18 raw types follow the Graesser/Olney question taxonomy. The default
//! merge into coarser types is a best-effort mapping and can be replaced by a
//! TOML file. The shipped rule-based classifier (wh-words and auxiliary
//! patterns) is a low-fidelity stand-in for a trained classifier.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::ConvQaDataset;
use crate::error::{Error, Result};

pub const RAW_TYPES: [&str; 18] = [
    "verification",
    "disjunctive",
    "concept_completion",
    "example",
    "feature_specification",
    "quantification",
    "definition",
    "comparison",
    "interpretation",
    "causal_antecedent",
    "causal_consequence",
    "goal_orientation",
    "instrumental_procedural",
    "enablement",
    "expectation",
    "judgmental",
    "assertion",
    "request_directive",
];

const DEFAULT_MERGE: [(&str, &str); 18] = [
    ("verification", "verification"),
    ("disjunctive", "disjunctive"),
    ("concept_completion", "concept"),
    ("example", "example"),
    ("feature_specification", "concept"),
    ("quantification", "extent"),
    ("definition", "concept"),
    ("comparison", "comparison"),
    ("interpretation", "concept"),
    ("causal_antecedent", "cause"),
    ("causal_consequence", "consequence"),
    ("goal_orientation", "cause"),
    ("instrumental_procedural", "procedural"),
    ("enablement", "procedural"),
    ("expectation", "cause"),
    ("judgmental", "judgmental"),
    ("assertion", "concept"),
    ("request_directive", "procedural"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTypeOntology {
    /// Merged type names in report order.
    pub types: Vec<String>,
    /// Raw type → merged type.
    pub merge_map: BTreeMap<String, String>,
}

impl Default for QuestionTypeOntology {
    fn default() -> Self {
        let mut types: Vec<String> = Vec::new();
        for (_, merged) in DEFAULT_MERGE {
            if !types.iter().any(|t| t == merged) {
                types.push(merged.to_string());
            }
        }
        Self {
            types,
            merge_map: DEFAULT_MERGE
                .iter()
                .map(|(r, m)| (r.to_string(), m.to_string()))
                .collect(),
        }
    }
}

impl QuestionTypeOntology {
    /// Parses `types = [...]` and a `[merge_map]` table, then validates.
    pub fn from_toml(src: &str) -> Result<Self> {
        let o: Self = toml::from_str(src).map_err(|e| Error::Config(format!("ontology: {e}")))?;
        o.validate()?;
        Ok(o)
    }

    /// The merge map must cover all 18 raw types and only target listed types.
    pub fn validate(&self) -> Result<()> {
        for raw in RAW_TYPES {
            match self.merge_map.get(raw) {
                None => return Err(Error::Config(format!("merge_map lacks raw type `{raw}`"))),
                Some(m) if !self.types.contains(m) => {
                    return Err(Error::Config(format!("`{raw}` maps to unknown type `{m}`")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn merge(&self, raw: &str) -> Result<&str> {
        self.merge_map
            .get(raw)
            .map(String::as_str)
            .ok_or_else(|| Error::invalid(format!("unknown raw question type `{raw}`")))
    }
}

/// Assigns one of [`RAW_TYPES`] to a question.
pub trait QuestionClassifier: Send + Sync {
    fn name(&self) -> &str;
    fn classify(&self, question: &str) -> Result<&'static str>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedClassifier;

const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "do", "does", "did", "can", "could", "will", "would", "should",
    "has", "have", "had", "may", "might", "must", "shall", "isn't", "aren't", "wasn't", "don't",
    "doesn't", "didn't", "can't",
];

impl RuleBasedClassifier {
    pub const NAME: &'static str = "rule-based";
}

impl QuestionClassifier for RuleBasedClassifier {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn classify(&self, question: &str) -> Result<&'static str> {
        let q = format!(" {} ", question.to_lowercase().trim_end_matches(['?', '.', '!', ' ']));
        let first = q.split_whitespace().next().unwrap_or("");
        let has = |pats: &[&str]| pats.iter().any(|p| q.contains(p));
        let starts = |pats: &[&str]| pats.iter().any(|p| q.trim_start().starts_with(p));

        let t = if has(&[" do you think ", " in your opinion ", " your view ", " would you recommend "]) {
            "judgmental"
        } else if has(&[" difference between ", " compare", " differ ", " similar to ", " versus ", " vs "]) {
            "comparison"
        } else if starts(&["tell me", "describe", "explain", "please", "give me", "list"]) {
            "request_directive"
        } else if has(&[" an example", " examples", " such as ", " what are some ", " what other ", " any other "]) {
            "example"
        } else if AUXILIARIES.contains(&first) {
            if has(&[" or "]) {
                "disjunctive"
            } else {
                "verification"
            }
        } else if starts(&["how many", "how much", "how long", "how tall", "how big", "how far", "how old", "how often", "how large", "how high", "how deep", "what percentage"]) {
            "quantification"
        } else if starts(&["why"]) || has(&[" what caused ", " what led to ", " reason for "]) {
            "causal_antecedent"
        } else if has(&[" what happens ", " what happened ", " what will happen ", " consequence", " result of ", " effect of ", " impact of "]) {
            "causal_consequence"
        } else if has(&[" purpose ", " goal ", " in order to "]) {
            "goal_orientation"
        } else if has(&[" what does ", " what is meant ", " define ", " definition "]) && has(&[" mean ", " meant ", " define", " definition "]) {
            "definition"
        } else if starts(&["how"]) {
            "instrumental_procedural"
        } else if starts(&["what is a ", "what is an ", "what are "]) {
            "definition"
        } else if has(&[" look like ", " kind of ", " type of ", " color ", " shape "]) {
            "feature_specification"
        } else if starts(&["what", "who", "where", "when", "which", "whose", "whom"]) {
            "concept_completion"
        } else {
            "concept_completion"
        };
        Ok(t)
    }
}

pub fn classifier_by_name(name: &str) -> Result<Box<dyn QuestionClassifier>> {
    match name {
        RuleBasedClassifier::NAME => Ok(Box::new(RuleBasedClassifier)),
        other => Err(Error::Unavailable {
            name: other.into(),
            advice: format!(
                "trained question-type classifiers are external plug-ins; use `{}` as the lower-fidelity fallback",
                RuleBasedClassifier::NAME
            ),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDistribution {
    pub total: usize,
    pub counts: BTreeMap<String, usize>,
    pub fractions: BTreeMap<String, f64>,
}

/// Fraction of question turns per merged type; every ontology type is listed.
pub fn question_type_distribution(
    ds: &ConvQaDataset,
    classifier: &dyn QuestionClassifier,
    ontology: &QuestionTypeOntology,
) -> Result<TypeDistribution> {
    let questions: Vec<&str> = ds
        .dialogs
        .iter()
        .flat_map(|d| d.qa_pairs().into_iter().map(|p| p.question.text.as_str()))
        .collect();
    distribution_of(&questions, classifier, ontology)
}

pub fn distribution_of(
    questions: &[&str],
    classifier: &dyn QuestionClassifier,
    ontology: &QuestionTypeOntology,
) -> Result<TypeDistribution> {
    ontology.validate()?;
    if questions.is_empty() {
        return Err(Error::invalid("no questions to classify"));
    }
    let mut counts: BTreeMap<String, usize> = ontology.types.iter().map(|t| (t.clone(), 0)).collect();
    for q in questions {
        let merged = ontology.merge(classifier.classify(q)?)?;
        *counts.get_mut(merged).expect("validated merge target") += 1;
    }
    let total = questions.len();
    let fractions = counts
        .iter()
        .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
        .collect();
    Ok(TypeDistribution {
        total,
        counts,
        fractions,
    })
}
