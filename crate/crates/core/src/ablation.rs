//! Task-by-reranking ablation grid.
//!
//! Each task set is trained once on a fresh backend, then used to generate
//! with re-ranking on and off, giving eight cells.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::GeneratorBackend;
use crate::dataset::write_dataset;
use crate::dialog::Passage;
use crate::error::{Error, Result};
use crate::eval::{evaluate_dataset, MetricPlugin};
use crate::exec::Execution;
use crate::inpaint::{inpaint_corpus, GenerationConfig};
use crate::keywords::KeywordExtractor;
use crate::rerank::RelevanceScorer;
use crate::tasks::Task;
use crate::trainer::{train, TrainOutput, TrainingConfig, TrainingCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskSet {
    Dr,
    DrQam,
    DrTdg,
    DrQamTdg,
}

impl TaskSet {
    pub const ALL: [TaskSet; 4] = [TaskSet::Dr, TaskSet::DrQam, TaskSet::DrTdg, TaskSet::DrQamTdg];

    pub fn tasks(self) -> Vec<Task> {
        match self {
            TaskSet::Dr => vec![Task::Dr],
            TaskSet::DrQam => vec![Task::Dr, Task::Qam],
            TaskSet::DrTdg => vec![Task::Dr, Task::Tdg],
            TaskSet::DrQamTdg => vec![Task::Dr, Task::Qam, Task::Tdg],
        }
    }

    pub fn label(self) -> String {
        self.tasks()
            .iter()
            .map(|t| t.name().to_uppercase())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// `base` with the λ of every disabled task zeroed.
    pub fn training_config(self, base: &TrainingConfig) -> TrainingConfig {
        let tasks = self.tasks();
        TrainingConfig {
            lambda_qam: if tasks.contains(&Task::Qam) { base.lambda_qam } else { 0.0 },
            lambda_tdg: if tasks.contains(&Task::Tdg) { base.lambda_tdg } else { 0.0 },
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellManifest {
    pub cell: String,
    pub tasks: Vec<Task>,
    pub rerank: bool,
    pub training: TrainingConfig,
    pub generation: GenerationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub manifest: CellManifest,
    pub dialogs: usize,
    pub final_loss: f64,
    /// Metric mean, `None` when the metric was unavailable.
    pub metrics: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    pub fn cell(&self, set: TaskSet, rerank: bool) -> Option<&AblationCell> {
        let tasks = set.tasks();
        self.cells
            .iter()
            .find(|c| c.manifest.tasks == tasks && c.manifest.rerank == rerank)
    }

    pub fn to_markdown(&self) -> String {
        let names: Vec<&String> = self.cells.first().map(|c| c.metrics.keys().collect()).unwrap_or_default();
        let mut s = format!(
            "| tasks | rerank | {} |\n|---|---|{}\n",
            names.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(" | "),
            "---|".repeat(names.len())
        );
        for c in &self.cells {
            let vals: Vec<String> = names
                .iter()
                .map(|n| c.metrics[*n].map_or("n/a".into(), |v| format!("{v:.4}")))
                .collect();
            s.push_str(&format!(
                "| {} | {} | {} |\n",
                TaskSetLabel(&c.manifest.tasks),
                if c.manifest.rerank { "on" } else { "off" },
                vals.join(" | ")
            ));
        }
        s
    }
}

struct TaskSetLabel<'a>(&'a [Task]);

impl std::fmt::Display for TaskSetLabel<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|t| t.name().to_uppercase()).collect();
        f.write_str(&parts.join("+"))
    }
}

pub struct AblationInputs<'a> {
    pub corpora: &'a [TrainingCorpus],
    pub passages: &'a [Passage],
    pub training: &'a TrainingConfig,
    pub generation: &'a GenerationConfig,
    pub extractor: &'a dyn KeywordExtractor,
    pub scorer: &'a dyn RelevanceScorer,
    pub metrics: &'a [&'a dyn MetricPlugin],
}

/// Runs all eight cells. With `out`, each cell writes
/// `<out>/<tasks>-rerank-<on|off>/{manifest.json,dataset.jsonl}`.
pub fn run_ablation<B, F>(
    inputs: &AblationInputs<'_>,
    make_backend: F,
    out: Option<&Path>,
    exec: Execution,
) -> Result<AblationTable>
where
    B: GeneratorBackend,
    F: Fn() -> B,
{
    if inputs.training.lambda_qam <= 0.0 || inputs.training.lambda_tdg <= 0.0 {
        return Err(Error::Config(
            "ablation needs positive lambda_qam and lambda_tdg for the cells that enable them".into(),
        ));
    }
    let mut cells = Vec::with_capacity(8);
    for set in TaskSet::ALL {
        let training = set.training_config(inputs.training);
        let mut backend = make_backend();
        let report = train(inputs.corpora, &training, &mut backend, inputs.extractor, &TrainOutput::default(), exec)?;
        let final_loss = report.final_losses.combined;
        for rerank in [true, false] {
            let generation = GenerationConfig {
                rerank,
                ..inputs.generation.clone()
            };
            let cell = format!("{}-rerank-{}", set.label().to_lowercase(), if rerank { "on" } else { "off" });
            log::info!("ablation cell {cell}");
            let scorer = rerank.then_some(inputs.scorer);
            let run = inpaint_corpus(&cell, inputs.passages, &backend, inputs.extractor, scorer, &generation, exec)?;
            let eval = evaluate_dataset(&run.dataset, inputs.metrics, exec)?;
            let manifest = CellManifest {
                cell: cell.clone(),
                tasks: set.tasks(),
                rerank,
                training: training.clone(),
                generation,
            };
            if let Some(dir) = out {
                let cell_dir = dir.join(&cell);
                fs::create_dir_all(&cell_dir)?;
                fs::write(cell_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
                write_dataset(&run.dataset, &cell_dir.join("dataset.jsonl"))?;
            }
            cells.push(AblationCell {
                manifest,
                dialogs: run.dataset.len(),
                final_loss,
                metrics: eval.metrics.iter().map(|(k, v)| (k.clone(), v.mean())).collect(),
            });
        }
    }
    Ok(AblationTable { cells })
}
