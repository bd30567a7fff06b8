use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use convqa_core::ablation::{run_ablation, AblationInputs, AblationTable};
use convqa_core::backend::{GeneratorBackend, StubBackend};
use convqa_core::bow::BagOfWordsBackend;
use convqa_core::dataset::{read_dataset, write_dataset, ConvQaDataset};
use convqa_core::eval::metrics::{dialog_passage, metric_by_name, MetricResult};
use convqa_core::eval::qtype::classifier_by_name;
use convqa_core::eval::stats::dialog_statistics;
use convqa_core::eval::{build_judge_prompt, evaluate_dataset, question_type_distribution, MetricPlugin, QuestionTypeOntology};
use convqa_core::fixtures::{fixture_passages, fixture_training_corpus};
use convqa_core::inpaint::{inpaint_corpus, GenerationConfig};
use convqa_core::keywords::StatisticalExtractor;
use convqa_core::manifest::{fingerprint_bytes, fingerprint_path, RunManifest, MANIFEST_FILE};
use convqa_core::rerank::{scorer_by_name, RelevanceScorer};
use convqa_core::retrieval::{
    build_pairs, evaluate_static, passage_map, read_static_rankings, retriever_by_name, run_zeroshot_eval, write_pairs,
    Benchmark, RetrieverConfig, ZeroShotConfig, ZeroShotTable,
};
use convqa_core::trainer::{train as run_training, TrainOutput, TrainingConfig, TrainingCorpus};
use convqa_core::Execution;

use crate::inputs::{backend_from_checkpoint, load_registry, load_source, load_training_corpus, new_backend};
use crate::{usage, AblateArgs, BackendKind, EvaluateArgs, GenerateArgs, RetrievalArgs, StatsArgs, TrainArgs};

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let src = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&src).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn finish(mut manifest: RunManifest, out: &Path) -> Result<()> {
    manifest.finish();
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

fn config_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

/// Training corpora from a registry, or the built-in ConvQA fixture.
fn training_corpora(
    registry: Option<&Path>,
    names: &[String],
    fixture: bool,
    exec: Execution,
) -> Result<(Vec<TrainingCorpus>, BTreeMap<String, String>)> {
    let mut corpora = Vec::new();
    let mut prints = BTreeMap::new();
    if fixture || names.is_empty() {
        if !fixture && registry.is_some() {
            return Err(usage("registry given but no corpora listed"));
        }
        let c = fixture_training_corpus();
        prints.insert(c.name.clone(), c.fingerprint());
        corpora.push(c);
    }
    if !names.is_empty() {
        let reg = load_registry(registry.ok_or_else(|| usage("corpora listed without a registry"))?)?;
        for n in names {
            let (c, fp) = load_training_corpus(reg.get(n)?, exec)?;
            prints.insert(n.clone(), fp);
            corpora.push(c);
        }
    }
    Ok((corpora, prints))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    backend: BackendKind,
    /// Relative to the config file.
    registry: Option<PathBuf>,
    corpora: Vec<String>,
    /// Train on the built-in ConvQA fixture.
    fixture: bool,
    training: TrainingConfig,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self {
            backend: BackendKind::Bow,
            registry: None,
            corpora: Vec::new(),
            fixture: false,
            training: TrainingConfig::default(),
        }
    }
}

pub fn train(a: TrainArgs, exec: Execution) -> Result<()> {
    let mut file: TrainFile = read_toml(&a.config)?;
    if let Some(b) = a.backend {
        file.backend = b;
    }
    let t = &mut file.training;
    if let Some(v) = a.lambda_qam {
        t.lambda_qam = v;
    }
    if let Some(v) = a.lambda_tdg {
        t.lambda_tdg = v;
    }
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.max_steps {
        t.max_steps = Some(v);
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    file.training.validate().map_err(|e| usage(e.to_string()))?;
    if !file.fixture && file.corpora.is_empty() {
        return Err(usage("config lists no corpora and `fixture` is false"));
    }
    let registry = file.registry.as_ref().map(|r| resolve(config_dir(&a.config), r));
    prepare_out(&a.out)?;
    let mut manifest = RunManifest::start("train", &file, Some(file.training.seed))?;
    let (corpora, prints) = training_corpora(registry.as_deref(), &file.corpora, file.fixture, exec)?;
    for (k, v) in prints {
        manifest.fingerprint(&k, v);
    }
    let mut backend = new_backend(file.backend);
    let report = run_training(
        &corpora,
        &file.training,
        backend.as_mut(),
        &StatisticalExtractor::default(),
        &TrainOutput { dir: Some(a.out.clone()) },
        exec,
    )?;
    write_json(
        &a.out.join("report.json"),
        &serde_json::json!({
            "steps": report.steps,
            "initial": report.initial,
            "final": report.final_losses,
            "checkpoint": report.checkpoint,
        }),
    )?;
    println!(
        "trained {} steps: combined loss {:.4} -> {:.4}; checkpoint at {}",
        report.steps,
        report.initial.combined,
        report.final_losses.combined,
        a.out.join("checkpoint").display()
    );
    finish(manifest, &a.out)
}

pub fn generate(a: GenerateArgs, exec: Execution) -> Result<()> {
    let cfg = GenerationConfig {
        beam_size: a.beam_size,
        rerank: !a.no_rerank,
        candidate_retention: a.retain_candidates,
        max_keywords: a.keywords,
        max_question_length: a.max_question_length,
        ..GenerationConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let scorer: Option<Box<dyn RelevanceScorer>> = if cfg.rerank {
        Some(scorer_by_name(&a.scorer).map_err(|e| usage(e.to_string()))?)
    } else {
        None
    };
    let backend: Box<dyn GeneratorBackend> = match (&a.checkpoint, a.backend) {
        (Some(dir), _) => backend_from_checkpoint(dir)?,
        (None, Some(kind)) => new_backend(kind),
        (None, None) => return Err(usage("give --checkpoint or --backend")),
    };
    let (source_name, passages, source_print) = load_source(&a.source, exec)?;
    prepare_out(&a.out)?;
    let name = a.name.clone().unwrap_or_else(|| {
        a.out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "generated".into())
    });
    let snapshot = serde_json::json!({
        "generation": cfg,
        "scorer": scorer.as_ref().map(|s| s.name().to_string()),
        "backend": backend.kind(),
        "checkpoint": a.checkpoint,
        "source": source_name,
        "dataset_name": name,
    });
    let mut manifest = RunManifest::start("generate", &snapshot, Some(a.seed))?;
    manifest.fingerprint(&source_name, source_print);
    if let Some(dir) = &a.checkpoint {
        manifest.fingerprint("checkpoint", fingerprint_path(dir)?);
    }
    let run = inpaint_corpus(
        &name,
        &passages,
        backend.as_ref(),
        &StatisticalExtractor::default(),
        scorer.as_deref(),
        &cfg,
        exec,
    )?;
    write_dataset(&run.dataset, &a.out.join("dataset.jsonl"))?;
    if !run.failures.is_empty() {
        write_json(&a.out.join("failures.json"), &run.failures)?;
    }
    println!(
        "generated {} dialogs from {} passages ({} failed) into {}",
        run.dataset.len(),
        passages.len(),
        run.failures.len(),
        a.out.join("dataset.jsonl").display()
    );
    finish(manifest, &a.out)
}

fn open_dataset(path: &Path) -> Result<ConvQaDataset> {
    if !path.is_file() {
        return Err(usage(format!("dataset {} does not exist", path.display())));
    }
    read_dataset(path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Serialize)]
struct JudgeRecord {
    dialog_id: String,
    turn_index: usize,
    prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<String>,
}

fn judge_records(a: &ConvQaDataset, b: &ConvQaDataset, limit: usize) -> Result<Vec<JudgeRecord>> {
    let by_id: BTreeMap<&str, _> = b.dialogs.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut out = Vec::new();
    for da in &a.dialogs {
        let Some(db) = by_id.get(da.id.as_str()) else { continue };
        let context = dialog_passage(da);
        let pb: BTreeMap<usize, _> = db.qa_pairs().into_iter().map(|p| (p.turn_index, p)).collect();
        for p in da.qa_pairs() {
            if out.len() >= limit {
                return Ok(out);
            }
            match pb.get(&p.turn_index) {
                Some(q) if q.answer.text == p.answer.text => out.push(JudgeRecord {
                    dialog_id: da.id.clone(),
                    turn_index: p.turn_index,
                    prompt: build_judge_prompt(&context, &p.question.text, &q.question.text, &p.answer.text)?,
                    verdict: None,
                }),
                _ => {}
            }
        }
    }
    Ok(out)
}

#[cfg(feature = "judge-http")]
fn judge_live(records: &mut [JudgeRecord]) -> Result<()> {
    let client = convqa_core::eval::judge::http::JudgeClient::from_env()?;
    for r in records {
        r.verdict = Some(client.judge(&r.prompt)?);
    }
    Ok(())
}

#[cfg(not(feature = "judge-http"))]
fn judge_live(_: &mut [JudgeRecord]) -> Result<()> {
    Err(usage("--judge-live needs a build with the `judge-http` feature"))
}

pub fn evaluate(a: EvaluateArgs, exec: Execution) -> Result<()> {
    let ds = open_dataset(&a.dataset)?;
    let ontology = match &a.ontology {
        Some(p) => {
            let src = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            QuestionTypeOntology::from_toml(&src)?
        }
        None => QuestionTypeOntology::default(),
    };
    prepare_out(&a.out)?;
    let snapshot = serde_json::json!({
        "dataset": a.dataset,
        "metrics": a.metrics,
        "question_types": a.question_types,
        "classifier": a.classifier,
        "ontology": ontology,
        "compare": a.compare,
        "judge_limit": a.judge_limit,
        "judge_live": a.judge_live,
    });
    let mut manifest = RunManifest::start("evaluate", &snapshot, None)?;
    manifest.fingerprint(&ds.name, fingerprint_path(&a.dataset)?);

    let mut plugins: Vec<Box<dyn MetricPlugin>> = Vec::new();
    let mut unavailable = BTreeMap::new();
    for m in &a.metrics {
        match metric_by_name(m) {
            Ok(p) => plugins.push(p),
            Err(e) => {
                log::warn!("{e}");
                unavailable.insert(m.clone(), MetricResult::Unavailable { error: e.to_string() });
            }
        }
    }
    let refs: Vec<&dyn MetricPlugin> = plugins.iter().map(|p| p.as_ref()).collect();
    let mut report = evaluate_dataset(&ds, &refs, exec)?;
    report.metrics.extend(unavailable);
    write_json(&a.out.join("evaluation.json"), &report)?;
    for (name, r) in &report.metrics {
        match r.mean() {
            Some(v) => println!("{name}\t{v:.4}"),
            None => println!("{name}\tunavailable"),
        }
    }

    if a.question_types {
        let classifier = classifier_by_name(&a.classifier)?;
        let dist = question_type_distribution(&ds, classifier.as_ref(), &ontology)?;
        write_json(&a.out.join("question_types.json"), &dist)?;
        for t in &ontology.types {
            println!("type:{t}\t{:.4}", dist.fractions[t]);
        }
    }

    if let Some(other) = &a.compare {
        let b = open_dataset(other)?;
        manifest.fingerprint(&format!("compare:{}", b.name), fingerprint_path(other)?);
        let mut records = judge_records(&ds, &b, a.judge_limit)?;
        if a.judge_live {
            judge_live(&mut records)?;
        }
        let mut s = String::new();
        for r in &records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        fs::write(a.out.join("judge_prompts.jsonl"), s)?;
        println!("wrote {} judge prompts", records.len());
    }
    finish(manifest, &a.out)
}

pub fn stats(a: StatsArgs, exec: Execution) -> Result<()> {
    if a.datasets.is_empty() && a.corpora.is_empty() {
        return Err(usage("give at least one --dataset or --registry/--corpus"));
    }
    prepare_out(&a.out)?;
    let mut manifest = RunManifest::start(
        "stats",
        &serde_json::json!({"datasets": a.datasets, "registry": a.registry, "corpora": a.corpora}),
        None,
    )?;
    let mut rows = BTreeMap::new();
    for p in &a.datasets {
        let ds = open_dataset(p)?;
        manifest.fingerprint(&ds.name, fingerprint_path(p)?);
        rows.insert(ds.name.clone(), dialog_statistics(&ds.dialogs)?);
    }
    if let Some(reg) = &a.registry {
        let reg = load_registry(reg)?;
        for n in &a.corpora {
            let (c, fp) = load_training_corpus(reg.get(n)?, exec)?;
            manifest.fingerprint(n, fp);
            rows.insert(n.clone(), dialog_statistics(&c.dialogs)?);
        }
    }
    println!("name\tdialogs\tmean_turns");
    for (name, s) in &rows {
        println!("{name}\t{}\t{}", s.num_dialogs, s.mean_turns_2dp());
    }
    write_json(&a.out.join("stats.json"), &rows)?;
    finish(manifest, &a.out)
}

pub fn retrieval_eval(a: RetrievalArgs, exec: Execution) -> Result<()> {
    let retriever_cfg: RetrieverConfig = match &a.retriever_config {
        Some(p) => read_toml(p)?,
        None => RetrieverConfig::default(),
    };
    let cfg = ZeroShotConfig {
        ks: a.ks.clone(),
        seeds: a.seeds.clone(),
        retriever: retriever_cfg,
    };
    if cfg.ks.contains(&0) {
        return Err(usage("--k must be at least 1"));
    }
    if a.dataset.is_none() && a.benchmark.is_none() {
        return Err(usage("give --dataset with a passage source, or --benchmark"));
    }
    prepare_out(&a.out)?;
    let snapshot = serde_json::json!({
        "dataset": a.dataset,
        "cap": a.cap,
        "benchmark": a.benchmark,
        "split": a.split,
        "retriever": if a.rankings.is_some() { "static".to_string() } else { a.retriever.clone() },
        "rankings": a.rankings,
        "zeroshot": cfg,
    });
    let mut manifest = RunManifest::start("retrieval-eval", &snapshot, a.seeds.first().copied())?;

    let mut pairs = Vec::new();
    let mut corpus = BTreeMap::new();
    if let Some(path) = &a.dataset {
        let ds = open_dataset(path)?;
        manifest.fingerprint(&ds.name, fingerprint_path(path)?);
        let (name, passages, print) = load_source(&a.source, exec)?;
        manifest.fingerprint(&name, print);
        corpus = passage_map(&passages);
        pairs = build_pairs(&ds, &corpus, a.cap)?;
        write_pairs(&pairs, &a.out.join("pairs.jsonl"))?;
        println!("built {} query-passage pairs", pairs.len());
    }
    let bench = match &a.benchmark {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(usage(format!("benchmark {} is not a directory", dir.display())));
            }
            manifest.fingerprint("benchmark", fingerprint_path(dir)?);
            Benchmark::load_beir(dir, &a.split)?
        }
        None => Benchmark::from_pairs("generated-pairs", &pairs, &corpus),
    };
    let table: ZeroShotTable = match &a.rankings {
        Some(path) => {
            manifest.fingerprint("rankings", fingerprint_path(path)?);
            evaluate_static(&bench, &read_static_rankings(path)?, &cfg.ks, exec)?
        }
        None => {
            let mut retriever = retriever_by_name(&a.retriever)?;
            run_zeroshot_eval(&pairs, retriever.as_mut(), &bench, &cfg, exec)?
        }
    };
    write_json(&a.out.join("results.json"), &table)?;
    let md = table.to_markdown();
    fs::write(a.out.join("results.md"), &md)?;
    print!("{md}");
    finish(manifest, &a.out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AblateFile {
    backend: BackendKind,
    registry: Option<PathBuf>,
    /// Training corpora; the ConvQA fixture when empty.
    corpora: Vec<String>,
    /// Passage corpus in the registry; the 20-passage fixture when absent.
    passages: Option<String>,
    metrics: Vec<String>,
    training: TrainingConfig,
    generation: GenerationConfig,
}

impl Default for AblateFile {
    fn default() -> Self {
        Self {
            backend: BackendKind::Bow,
            registry: None,
            corpora: Vec::new(),
            passages: None,
            metrics: vec!["lexical-overlap".into()],
            training: TrainingConfig {
                learning_rate: 0.05,
                max_steps: Some(20),
                ..TrainingConfig::default()
            },
            generation: GenerationConfig::default(),
        }
    }
}

pub fn ablate(a: AblateArgs, exec: Execution) -> Result<()> {
    let (mut file, base) = match &a.config {
        Some(p) => (read_toml::<AblateFile>(p)?, config_dir(p).to_path_buf()),
        None => (AblateFile::default(), PathBuf::from(".")),
    };
    if !a.metrics.is_empty() {
        file.metrics = a.metrics.clone();
    }
    if let Some(b) = a.backend {
        file.backend = b;
    }
    file.training.validate().map_err(|e| usage(e.to_string()))?;
    file.generation.validate().map_err(|e| usage(e.to_string()))?;
    let registry = file.registry.as_ref().map(|r| resolve(&base, r));
    prepare_out(&a.out)?;
    let mut manifest = RunManifest::start("ablate", &file, Some(file.training.seed))?;

    let (corpora, prints) = training_corpora(registry.as_deref(), &file.corpora, false, exec)?;
    for (k, v) in prints {
        manifest.fingerprint(&k, v);
    }
    let passages = match &file.passages {
        Some(name) => {
            let src = crate::PassageSource {
                registry: Some(registry.clone().ok_or_else(|| usage("`passages` needs a registry"))?),
                corpus: Some(name.clone()),
                passages: None,
                fixture_passages: false,
            };
            let (n, ps, print) = load_source(&src, exec)?;
            manifest.fingerprint(&n, print);
            ps
        }
        None => {
            let ps = fixture_passages();
            manifest.fingerprint("fixture-passages", fingerprint_bytes(&serde_json::to_vec(&ps)?));
            ps
        }
    };
    let plugins: Vec<Box<dyn MetricPlugin>> = file
        .metrics
        .iter()
        .map(|m| metric_by_name(m).map_err(|e| usage(e.to_string())))
        .collect::<Result<_>>()?;
    let metric_refs: Vec<&dyn MetricPlugin> = plugins.iter().map(|p| p.as_ref()).collect();
    let scorer = convqa_core::rerank::LexicalOverlapScorer;
    let extractor = StatisticalExtractor::default();
    let inputs = AblationInputs {
        corpora: &corpora,
        passages: &passages,
        training: &file.training,
        generation: &file.generation,
        extractor: &extractor,
        scorer: &scorer,
        metrics: &metric_refs,
    };
    let cells = a.out.join("cells");
    let table: AblationTable = match file.backend {
        BackendKind::Bow => run_ablation(&inputs, BagOfWordsBackend::default, Some(&cells), exec)?,
        BackendKind::Stub => run_ablation(&inputs, StubBackend::default, Some(&cells), exec)?,
    };
    write_json(&a.out.join("ablation.json"), &table)?;
    let md = table.to_markdown();
    fs::write(a.out.join("ablation.md"), &md)?;
    print!("{md}");
    finish(manifest, &a.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use convqa_core::backend::StubBackend;
    use convqa_core::inpaint::inpaint_corpus;

    fn generated(rerank: bool) -> ConvQaDataset {
        let cfg = GenerationConfig { rerank, ..GenerationConfig::default() };
        let scorer = convqa_core::rerank::LexicalOverlapScorer;
        inpaint_corpus(
            "t",
            &fixture_passages()[..3],
            &StubBackend::default(),
            &StatisticalExtractor::default(),
            Some(&scorer),
            &cfg,
            Execution::Sequential,
        )
        .unwrap()
        .dataset
    }

    #[test]
    fn train_file_defaults_and_unknown_keys() {
        let f: TrainFile = toml::from_str("fixture = true\n[training]\nlambda_qam = 0.5\n").unwrap();
        assert_eq!(f.backend, BackendKind::Bow);
        assert_eq!(f.training.lambda_qam, 0.5);
        assert_eq!(f.training.lambda_tdg, TrainingConfig::default().lambda_tdg);
        assert!(toml::from_str::<TrainFile>("fixtures = true\n").is_err());
    }

    #[test]
    fn ablate_file_partial_config_keeps_grid_defaults() {
        let f: AblateFile = toml::from_str("backend = \"stub\"\n").unwrap();
        assert_eq!(f.backend, BackendKind::Stub);
        assert_eq!(f.training.max_steps, Some(20));
        assert_eq!(f.metrics, vec!["lexical-overlap".to_string()]);
    }

    #[test]
    fn judge_records_align_turns_and_respect_limit() {
        let a = generated(true);
        let b = generated(false);
        let all = judge_records(&a, &b, usize::MAX).unwrap();
        let pairs: usize = a.dialogs.iter().map(|d| d.qa_pairs().len()).sum();
        assert_eq!(all.len(), pairs);
        assert!(all.iter().all(|r| r.prompt.ends_with('\n')));
        assert_eq!(judge_records(&a, &b, 2).unwrap().len(), 2);
        let mut other = b.clone();
        other.dialogs.truncate(1);
        let some = judge_records(&a, &other, usize::MAX).unwrap();
        assert!(some.iter().all(|r| r.dialog_id == b.dialogs[0].id));
    }

    #[test]
    fn relative_registry_paths_resolve_against_config() {
        assert_eq!(resolve(Path::new("/cfg"), Path::new("reg.toml")), PathBuf::from("/cfg/reg.toml"));
        assert_eq!(resolve(Path::new("/cfg"), Path::new("/abs.toml")), PathBuf::from("/abs.toml"));
        assert_eq!(config_dir(Path::new("t.toml")), Path::new(""));
    }
}
