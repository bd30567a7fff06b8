//! Reference-free evaluation of generated datasets.

pub mod judge;
pub mod metrics;
pub mod qtype;
pub mod stats;

pub use judge::build_judge_prompt;
pub use metrics::{evaluate_dataset, ConstantMetric, EvaluationReport, LexicalOverlapMetric, MetricPlugin, QuestionTurn};
pub use qtype::{question_type_distribution, QuestionClassifier, QuestionTypeOntology, RuleBasedClassifier, TypeDistribution};
pub use stats::{dataset_statistics, DatasetStatistics};
