//! Multi-task training loop over an abstract backend.
//!
//! The objective is `L = L_dr + λ_qam·L_qam + λ_tdg·L_tdg`. Examples come from
//! a seeded stream whose order is independent of batch size and accumulation,
//! and each task draws from its own random stream, so disabling a task never
//! perturbs the examples of the others.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{fnv64, GeneratorBackend, WeightedExample};
use crate::corpus::CorpusKind;
use crate::dialog::Dialog;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::keywords::{KeywordExtractor, DEFAULT_MAX_KEYWORDS};
use crate::optim::{OptimizerConfig, Schedule};
use crate::render::Renderer;
use crate::tasks::{
    answered_question_indices, build_dr_example, build_qam_examples, build_tdg_example, Task,
    TrainingExample,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lambda_qam: f64,
    pub lambda_tdg: f64,
    pub learning_rate: f64,
    /// Examples per micro-batch.
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub optimizer: OptimizerConfig,
    pub schedule: Schedule,
    pub warmup_steps: usize,
    pub epochs: usize,
    /// Caps the number of optimizer steps; otherwise `epochs` passes are made.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub max_keywords: usize,
    /// Save a checkpoint every this many optimizer steps.
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_qam: 0.1,
            lambda_tdg: 0.1,
            learning_rate: 5e-5,
            batch_size: 8,
            grad_accum_steps: 8,
            optimizer: OptimizerConfig::default(),
            schedule: Schedule::Linear,
            warmup_steps: 0,
            epochs: 3,
            max_steps: None,
            seed: 0,
            max_keywords: DEFAULT_MAX_KEYWORDS,
            checkpoint_every: None,
        }
    }
}

impl TrainingConfig {
    /// Reconstruction only: the vanilla inpainter objective.
    pub fn dr_only() -> Self {
        Self {
            lambda_qam: 0.0,
            lambda_tdg: 0.0,
            ..Self::default()
        }
    }

    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.grad_accum_steps
    }

    pub fn task_enabled(&self, task: Task) -> bool {
        match task {
            Task::Dr => true,
            Task::Qam => self.lambda_qam > 0.0,
            Task::Tdg => self.lambda_tdg > 0.0,
        }
    }

    pub fn task_weight(&self, task: Task) -> f64 {
        match task {
            Task::Dr => 1.0,
            Task::Qam => self.lambda_qam,
            Task::Tdg => self.lambda_tdg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda_qam.is_finite() && self.lambda_qam >= 0.0) {
            return bad("lambda_qam must be finite and >= 0");
        }
        if !(self.lambda_tdg.is_finite() && self.lambda_tdg >= 0.0) {
            return bad("lambda_tdg must be finite and >= 0");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 || self.grad_accum_steps == 0 || self.epochs == 0 {
            return bad("batch_size, grad_accum_steps and epochs must be >= 1");
        }
        if self.max_keywords == 0 {
            return bad("max_keywords must be >= 1");
        }
        let o = &self.optimizer;
        if !(o.max_grad_norm > 0.0 && o.epsilon > 0.0) {
            return bad("max_grad_norm and epsilon must be > 0");
        }
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return bad("betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// `l_dr + λ_qam·l_qam + λ_tdg·l_tdg`.
pub fn combined_loss(l_dr: f64, l_qam: f64, l_tdg: f64, cfg: &TrainingConfig) -> Result<f64> {
    for (term, value) in [("dr", l_dr), ("qam", l_qam), ("tdg", l_tdg)] {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::NonFiniteLoss { term, value });
        }
    }
    Ok(l_dr + cfg.lambda_qam * l_qam + cfg.lambda_tdg * l_tdg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCorpus {
    pub name: String,
    pub kind: CorpusKind,
    pub dialogs: Vec<Dialog>,
}

impl TrainingCorpus {
    pub fn new(name: impl Into<String>, kind: CorpusKind, dialogs: Vec<Dialog>) -> Self {
        Self {
            name: name.into(),
            kind,
            dialogs,
        }
    }

    /// SHA-256 over the canonical JSON of the dialogs.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.dialogs {
            h.update(serde_json::to_vec(d).expect("dialog serializes"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

fn derived_rng(seed: u64, tag: &str, epoch: usize, index: usize) -> ChaCha8Rng {
    let h = fnv64(&[
        &seed.to_le_bytes(),
        tag.as_bytes(),
        &(epoch as u64).to_le_bytes(),
        &(index as u64).to_le_bytes(),
    ]);
    ChaCha8Rng::seed_from_u64(h)
}

/// Canonical seeded example order.
///
/// Each epoch visits every dialog of every corpus once, in an order shuffled
/// by `(seed, epoch)`. Each visit emits one reconstruction example, then for
/// ConvQA corpora a positive and a negative matching example and one
/// topic-aware example, for the tasks that are enabled.
pub struct ExampleStream<'a> {
    dialogs: Vec<(&'a Dialog, CorpusKind)>,
    renderer: Renderer,
    extractor: &'a dyn KeywordExtractor,
    cfg: TrainingConfig,
    exec: Execution,
}

impl<'a> ExampleStream<'a> {
    pub fn new(
        corpora: &'a [TrainingCorpus],
        cfg: &TrainingConfig,
        renderer: Renderer,
        extractor: &'a dyn KeywordExtractor,
        exec: Execution,
    ) -> Result<Self> {
        cfg.validate()?;
        let dialogs: Vec<_> = corpora
            .iter()
            .filter(|c| c.kind.is_dialog())
            .flat_map(|c| c.dialogs.iter().map(move |d| (d, c.kind)))
            .collect();
        if dialogs.is_empty() {
            return Err(Error::Config("training needs at least one non-empty dialog corpus".into()));
        }
        let has_convqa = corpora
            .iter()
            .any(|c| c.kind == CorpusKind::ConvqaDialog && !c.dialogs.is_empty());
        if (cfg.task_enabled(Task::Qam) || cfg.task_enabled(Task::Tdg)) && !has_convqa {
            return Err(Error::Config(
                "question-answer matching and topic-aware generation need a ConvQA corpus; set their lambdas to 0".into(),
            ));
        }
        Ok(Self {
            dialogs,
            renderer,
            extractor,
            cfg: cfg.clone(),
            exec,
        })
    }

    fn dialog_examples(&self, epoch: usize, index: usize) -> Result<Vec<TrainingExample>> {
        let (d, kind) = self.dialogs[index];
        let seed = self.cfg.seed;
        let mut out = Vec::with_capacity(4);
        out.push(build_dr_example(
            &self.renderer,
            d,
            None,
            &mut derived_rng(seed, "dr", epoch, index),
        )?);
        if kind != CorpusKind::ConvqaDialog {
            return Ok(out);
        }
        if self.cfg.task_enabled(Task::Qam) {
            match build_qam_examples(&self.renderer, d, &mut derived_rng(seed, "qam", epoch, index)) {
                Ok((pos, neg)) => {
                    out.push(pos);
                    out.push(neg);
                }
                Err(Error::NotEnoughPairs(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if self.cfg.task_enabled(Task::Tdg) {
            let questions = answered_question_indices(d);
            let mut rng = derived_rng(seed, "tdg", epoch, index);
            if let Some(&t) = questions.choose(&mut rng) {
                let context: Vec<&str> = d.utterances.iter().map(|u| u.text.as_str()).collect();
                let kws = self.extractor.extract_in_context(
                    &d.utterances[t + 1].text,
                    &context,
                    self.cfg.max_keywords,
                );
                if !kws.is_empty() {
                    out.push(build_tdg_example(&self.renderer, d, t, &kws)?);
                }
            }
        }
        Ok(out)
    }

    /// All examples of one epoch in canonical order.
    pub fn epoch(&self, epoch: usize) -> Result<Vec<TrainingExample>> {
        let mut order: Vec<usize> = (0..self.dialogs.len()).collect();
        order.shuffle(&mut derived_rng(self.cfg.seed, "shuffle", epoch, 0));
        let per_dialog = self.exec.map(&order, |&i| self.dialog_examples(epoch, i));
        let mut out = Vec::new();
        for r in per_dialog {
            out.extend(r?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub l_dr: f64,
    pub l_qam: f64,
    pub l_tdg: f64,
    pub combined: f64,
    pub n_dr: usize,
    pub n_qam: usize,
    pub n_tdg: usize,
    pub lr: f64,
    pub grad_norm: f64,
}

/// Per-task mean losses over a set of examples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskLosses {
    pub dr: f64,
    pub qam: f64,
    pub tdg: f64,
    pub combined: f64,
}

fn task_means(examples: &[&TrainingExample], losses: &[f64]) -> (BTreeMap<Task, (f64, usize)>, [f64; 3]) {
    let mut acc: BTreeMap<Task, (f64, usize)> = BTreeMap::new();
    for (e, l) in examples.iter().zip(losses) {
        let s = acc.entry(e.task).or_default();
        s.0 += l;
        s.1 += 1;
    }
    let mean = |t: Task| acc.get(&t).map_or(0.0, |(s, n)| s / *n as f64);
    let means = [mean(Task::Dr), mean(Task::Qam), mean(Task::Tdg)];
    (acc, means)
}

/// Mean per-task losses of `examples` under the backend, without updating it.
pub fn evaluate_losses<B: GeneratorBackend + ?Sized>(
    backend: &B,
    examples: &[TrainingExample],
    cfg: &TrainingConfig,
    exec: Execution,
) -> Result<TaskLosses> {
    let losses: Vec<f64> = exec
        .map(examples, |e| backend.loss(&e.input_text, &e.target_text))
        .into_iter()
        .collect::<Result<_>>()?;
    let refs: Vec<&TrainingExample> = examples.iter().collect();
    let (_, [dr, qam, tdg]) = task_means(&refs, &losses);
    Ok(TaskLosses {
        dr,
        qam,
        tdg,
        combined: combined_loss(dr, qam, tdg, cfg)?,
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BACKEND_DIR: &str = "backend";
pub const METRICS_FILE: &str = "metrics.jsonl";

/// Toolkit-owned half of a checkpoint; the backend owns `backend/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub backend_kind: String,
    pub step: usize,
    pub config: TrainingConfig,
    pub corpus_fingerprints: BTreeMap<String, String>,
    pub toolkit_version: String,
}

/// Writes manifest and backend blob into `dir`, replacing any previous
/// checkpoint only once the new one is complete.
pub fn save_checkpoint<B: GeneratorBackend + ?Sized>(
    dir: &Path,
    backend: &B,
    manifest: &CheckpointManifest,
) -> Result<()> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = parent.join(format!(".{name}.tmp"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    backend.save(&tmp.join(BACKEND_DIR))?;
    fs::write(tmp.join(MANIFEST_FILE), serde_json::to_vec_pretty(manifest)?)?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(())
}

pub fn read_checkpoint_manifest(dir: &Path) -> Result<CheckpointManifest> {
    Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?)
}

/// Loads the backend blob of a checkpoint after checking its kind.
pub fn load_checkpoint<B: GeneratorBackend + ?Sized>(dir: &Path, backend: &mut B) -> Result<CheckpointManifest> {
    let m = read_checkpoint_manifest(dir)?;
    if m.backend_kind != backend.kind() {
        return Err(Error::Backend(format!(
            "checkpoint holds a `{}` backend, not `{}`",
            m.backend_kind,
            backend.kind()
        )));
    }
    backend.load(&dir.join(BACKEND_DIR))?;
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub steps: usize,
    pub log: Vec<StepLog>,
    /// Losses over the first epoch's examples before training.
    pub initial: TaskLosses,
    /// Same examples after training.
    pub final_losses: TaskLosses,
    pub checkpoint: Option<PathBuf>,
    pub corpus_fingerprints: BTreeMap<String, String>,
}

/// Where checkpoints and metrics go. Everything is kept in memory when absent.
#[derive(Debug, Clone, Default)]
pub struct TrainOutput {
    pub dir: Option<PathBuf>,
}

pub fn train<B: GeneratorBackend + ?Sized>(
    corpora: &[TrainingCorpus],
    cfg: &TrainingConfig,
    backend: &mut B,
    extractor: &dyn KeywordExtractor,
    output: &TrainOutput,
    exec: Execution,
) -> Result<TrainingReport> {
    let stream = ExampleStream::new(corpora, cfg, backend.renderer(), extractor, exec)?;
    let first = stream.epoch(0)?;
    if first.is_empty() {
        return Err(Error::Config("training stream is empty".into()));
    }
    let window = cfg.effective_batch();
    let total_steps = cfg
        .max_steps
        .unwrap_or_else(|| cfg.epochs * first.len().div_ceil(window));
    let fingerprints: BTreeMap<String, String> = corpora
        .iter()
        .map(|c| (c.name.clone(), c.fingerprint()))
        .collect();
    let manifest_at = |step: usize, kind: &str| CheckpointManifest {
        backend_kind: kind.to_string(),
        step,
        config: cfg.clone(),
        corpus_fingerprints: fingerprints.clone(),
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
    };

    let initial = evaluate_losses(&*backend, &first, cfg, exec)?;
    let mut metrics = match &output.dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(BufWriter::new(fs::File::create(dir.join(METRICS_FILE))?))
        }
        None => None,
    };
    let checkpoint_dir = output.dir.as_ref().map(|d| d.join("checkpoint"));
    let mut last_good: Option<PathBuf> = None;

    let mut epoch = 0;
    let mut buffer = first.clone();
    let mut cursor = 0;
    let mut log = Vec::with_capacity(total_steps);
    for step in 0..total_steps {
        let mut win: Vec<TrainingExample> = Vec::with_capacity(window);
        while win.len() < window {
            if cursor == buffer.len() {
                epoch += 1;
                buffer = stream.epoch(epoch)?;
                cursor = 0;
            }
            let take = (window - win.len()).min(buffer.len() - cursor);
            win.extend_from_slice(&buffer[cursor..cursor + take]);
            cursor += take;
        }
        let result = run_step(backend, &win, cfg, step, total_steps);
        let entry = match result {
            Ok(entry) => entry,
            Err(e) => {
                return Err(Error::TrainingAborted {
                    step,
                    last_good,
                    source: Box::new(e),
                })
            }
        };
        if let Some(w) = metrics.as_mut() {
            writeln!(w, "{}", serde_json::to_string(&entry)?)?;
        }
        log.push(entry);
        if let (Some(every), Some(dir)) = (cfg.checkpoint_every, &checkpoint_dir) {
            if every > 0 && (step + 1) % every == 0 {
                save_checkpoint(dir, &*backend, &manifest_at(step + 1, backend.kind()))?;
                last_good = Some(dir.clone());
            }
        }
    }
    if let Some(w) = metrics.as_mut() {
        w.flush()?;
    }
    let final_losses = evaluate_losses(&*backend, &first, cfg, exec)?;
    if let Some(dir) = &checkpoint_dir {
        save_checkpoint(dir, &*backend, &manifest_at(total_steps, backend.kind()))?;
    }
    Ok(TrainingReport {
        steps: total_steps,
        log,
        initial,
        final_losses,
        checkpoint: checkpoint_dir,
        corpus_fingerprints: fingerprints,
    })
}

fn run_step<B: GeneratorBackend + ?Sized>(
    backend: &mut B,
    window: &[TrainingExample],
    cfg: &TrainingConfig,
    step: usize,
    total_steps: usize,
) -> Result<StepLog> {
    let mut counts: BTreeMap<Task, usize> = BTreeMap::new();
    for e in window {
        *counts.entry(e.task).or_default() += 1;
    }
    let weight = |t: Task| cfg.task_weight(t) / counts[&t] as f64;
    let mut losses = Vec::with_capacity(window.len());
    for micro in window.chunks(cfg.batch_size) {
        let batch: Vec<WeightedExample<'_>> = micro
            .iter()
            .map(|e| WeightedExample {
                example: e,
                weight: weight(e.task),
            })
            .collect();
        let l = backend.accumulate(&batch)?;
        if l.len() != micro.len() {
            return Err(Error::Backend(format!(
                "backend returned {} losses for {} examples",
                l.len(),
                micro.len()
            )));
        }
        losses.extend(l);
    }
    let refs: Vec<&TrainingExample> = window.iter().collect();
    let (acc, [l_dr, l_qam, l_tdg]) = task_means(&refs, &losses);
    let combined = combined_loss(l_dr, l_qam, l_tdg, cfg)?;
    let lr = cfg
        .schedule
        .lr(cfg.learning_rate, step, cfg.warmup_steps, total_steps);
    let stats = backend.apply_update(&cfg.optimizer, lr)?;
    let n = |t: Task| acc.get(&t).map_or(0, |s| s.1);
    Ok(StepLog {
        step,
        l_dr,
        l_qam,
        l_tdg,
        combined,
        n_dr: n(Task::Dr),
        n_qam: n(Task::Qam),
        n_tdg: n(Task::Tdg),
        lr,
        grad_norm: stats.grad_norm,
    })
}
