//! Acceptance checks, one line of output per criterion.
//!
//! Run with `cargo test -p convqa-core --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use convqa_core::ablation::{run_ablation, AblationInputs, TaskSet};
use convqa_core::backend::StubBackend;
use convqa_core::bow::BagOfWordsBackend;
use convqa_core::corpus::CorpusKind;
use convqa_core::dataset::{read_dataset, write_dataset};
use convqa_core::dialog::{validate_dialog, Dialog, Passage};
use convqa_core::eval::judge::{CRITERIA, INSTRUCTION, OPTIONS_LINE, QUESTIONS};
use convqa_core::eval::{build_judge_prompt, dataset_statistics, LexicalOverlapMetric};
use convqa_core::fixtures::{
    fixture_convqa_dialogs, fixture_passages, fixture_training_corpus, grevillea, synthetic_convqa_dialogs,
};
use convqa_core::inpaint::{build_context, inpaint_corpus, GenerationConfig};
use convqa_core::keywords::StatisticalExtractor;
use convqa_core::render::{Renderer, DEFAULT_SENTINEL};
use convqa_core::rerank::{rerank, Candidate, CandidateSet, LexicalOverlapScorer, RelevanceScorer};
use convqa_core::retrieval::{map_at_k, ndcg_at_k, recall_at_k, RankedRetrieval};
use convqa_core::tasks::{build_qam_examples, build_tdg_example, QamTargets, Task};
use convqa_core::trainer::{combined_loss, train, ExampleStream, TrainOutput, TrainingConfig, TrainingCorpus};
use convqa_core::{Error, Execution};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget_secs: u64) -> Result<(), String> {
    ensure(elapsed <= Duration::from_secs(budget_secs), || {
        format!("took {elapsed:?}, budget {budget_secs}s")
    })
}

fn headline_numbers() -> Result<String, String> {
    Ok("not reproducible at desk scale (needs full-size models, external metric models and human raters); \
        covered by the property checks below"
        .into())
}

fn fixture_passage() -> Passage {
    let d = grevillea();
    let sentences: Vec<String> = d.qa_pairs().iter().map(|p| p.answer.text.clone()).collect();
    Passage {
        id: "grevillea-rudis".into(),
        title: "Grevillea rudis".into(),
        raw_text: sentences.join(" "),
        sentences,
    }
}

fn format_parity() -> Result<String, String> {
    let start = Instant::now();
    let p = fixture_passage();
    let d = grevillea();
    let r = Renderer::default();
    let q1 = d.utterances[0].text.clone();
    let ctx = build_context(&p, 1, &[q1.clone()], &["shrub", "height"], &GenerationConfig::default(), DEFAULT_SENTINEL)
        .map_err(|e| e.to_string())?;
    let rendered = ctx.render(&r);
    let golden = format!(
        "Hello, I want to learn about Grevillea rudis. User: {q1} Agent: {} User: Keyword: shrub, height <extra_id_0> Agent: {}",
        p.sentences[0], p.sentences[1]
    );
    ensure(rendered == golden, || format!("context mismatch:\n{rendered}\n{golden}"))?;
    let prefix = Dialog::new("prefix", d.utterances[..4].to_vec());
    let tdg = build_tdg_example(&r, &prefix, 2, &["shrub", "height"]).map_err(|e| e.to_string())?;
    ensure(rendered == format!("{} {}", ctx.prompt_text, tdg.input_text), || {
        "training and inference renderings differ".into()
    })?;
    let (pos, neg) = build_qam_examples(&r, &d, &mut ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
    ensure(pos.target_text == "The answer matches the question", || pos.target_text.clone())?;
    ensure(neg.target_text == "The answer does not match the question", || neg.target_text.clone())?;
    ensure(QamTargets::NEGATIVE == neg.target_text, || "constant drift".into())?;
    within(start.elapsed(), 1)?;
    Ok("golden context, shared renderer and matching targets are byte-exact".into())
}

fn loss_algebra() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        let cfg = TrainingConfig {
            lambda_qam: rng.gen_range(0.0..2.0),
            lambda_tdg: rng.gen_range(0.0..2.0),
            ..Default::default()
        };
        let (a, b, c) = (rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0));
        let got = combined_loss(a, b, c, &cfg).map_err(|e| e.to_string())?;
        let want = a + cfg.lambda_qam * b + cfg.lambda_tdg * c;
        ensure((got - want).abs() <= 1e-9, || format!("{got} vs {want}"))?;
    }
    let corpora = vec![TrainingCorpus::new("syn", CorpusKind::ConvqaDialog, synthetic_convqa_dialogs(100, 0))];
    let ex = StatisticalExtractor::default();
    let base = ExampleStream::new(&corpora, &TrainingConfig::dr_only(), Renderer::default(), &ex, Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let full = ExampleStream::new(&corpora, &TrainingConfig::default(), Renderer::default(), &ex, Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let zeroed = TrainingConfig {
        lambda_qam: 0.0,
        lambda_tdg: 0.0,
        ..TrainingConfig::default()
    };
    let zero = ExampleStream::new(&corpora, &zeroed, Renderer::default(), &ex, Execution::Sequential)
        .map_err(|e| e.to_string())?;
    for epoch in 0..3 {
        let b = base.epoch(epoch).map_err(|e| e.to_string())?;
        ensure(b == zero.epoch(epoch).map_err(|e| e.to_string())?, || "λ=0 stream differs".into())?;
        let dr: Vec<_> = full.epoch(epoch).map_err(|e| e.to_string())?.into_iter().filter(|e| e.task == Task::Dr).collect();
        ensure(b == dr, || "reconstruction examples shift when other tasks are enabled".into())?;
    }
    within(start.elapsed(), 5)?;
    Ok("1000 triples within 1e-9; λ=(0,0) stream identical over 100 dialogs".into())
}

fn overfit_smoke() -> Result<String, String> {
    let start = Instant::now();
    let cfg = TrainingConfig {
        learning_rate: 0.1,
        max_steps: Some(200),
        seed: 0,
        ..Default::default()
    };
    let mut backend = BagOfWordsBackend::default();
    let report = train(
        &[fixture_training_corpus()],
        &cfg,
        &mut backend,
        &StatisticalExtractor::default(),
        &TrainOutput::default(),
        Execution::Parallel,
    )
    .map_err(|e| e.to_string())?;
    let (i, f) = (report.initial.combined, report.final_losses.combined);
    ensure(report.steps == 200, || format!("{} steps", report.steps))?;
    ensure(f < 0.5 * i, || format!("final {f:.4} vs initial {i:.4}"))?;
    within(start.elapsed(), 60)?;
    Ok(format!("combined loss {i:.4} -> {f:.4} (ratio {:.3}) in 200 steps", f / i))
}

/// Applies a strictly increasing map to another scorer.
struct Monotone<'a> {
    inner: &'a dyn RelevanceScorer,
    a: f64,
    p: f64,
    b: f64,
}

impl RelevanceScorer for Monotone<'_> {
    fn name(&self) -> &str {
        "monotone"
    }
    fn score(&self, c: &str, q: &str, a: &str) -> convqa_core::Result<f64> {
        Ok(self.a * self.inner.score(c, q, a)?.powf(self.p) + self.b)
    }
}

const VOCAB: [&str; 16] = [
    "shrub", "leaves", "flowers", "seed", "height", "western", "australia", "fruit", "bloom", "year",
    "cream", "yellow", "grows", "where", "what", "found",
];

fn random_text(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.gen_range(1..=max);
    (0..n).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
}

fn rerank_dominance() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let scorer = LexicalOverlapScorer;
    let maps: Vec<Monotone> = (0..10)
        .map(|_| Monotone {
            inner: &scorer,
            a: rng.gen_range(0.1..10.0),
            p: rng.gen_range(0.25..4.0),
            b: rng.gen_range(-5.0..5.0),
        })
        .collect();
    for _ in 0..1000 {
        let n = rng.gen_range(1..=8);
        let cands = (0..n)
            .map(|_| Candidate::new(random_text(&mut rng, 6) + "?", -rng.gen_range(0.0..10.0)))
            .collect();
        let set = CandidateSet::from_unsorted(cands).map_err(|e| e.to_string())?;
        let context = random_text(&mut rng, 20);
        let answer = random_text(&mut rng, 8);
        let (sel, scored) = rerank(&set, &scorer, &context, &answer, Execution::Sequential).map_err(|e| e.to_string())?;
        let s = |i: usize| scored.get(i).and_then(|c| c.relevance_score).unwrap();
        ensure(s(sel) >= s(0), || "selected below candidate 0".into())?;
        ensure((0..n).all(|i| s(sel) >= s(i)), || "selection is not the argmax".into())?;
        for m in &maps {
            let (sel2, _) = rerank(&set, m, &context, &answer, Execution::Sequential).map_err(|e| e.to_string())?;
            ensure(sel2 == sel, || format!("argmax moved under map a={} p={} b={}", m.a, m.p, m.b))?;
        }
    }
    within(start.elapsed(), 5)?;
    Ok("1000 candidate sets, argmax stable under 10 monotone maps".into())
}

fn generate(dir: &std::path::Path, passages: &[Passage]) -> Result<(Vec<Dialog>, Vec<u8>), String> {
    let run = inpaint_corpus(
        "fixture",
        passages,
        &StubBackend::default(),
        &StatisticalExtractor::default(),
        Some(&LexicalOverlapScorer),
        &GenerationConfig::default(),
        Execution::Parallel,
    )
    .map_err(|e| e.to_string())?;
    let path = dir.join("dataset.jsonl");
    write_dataset(&run.dataset, &path).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    Ok((run.dataset.dialogs, bytes))
}

fn end_to_end() -> Result<String, String> {
    let start = Instant::now();
    let passages = fixture_passages();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (dialogs, first) = generate(a.path(), &passages)?;
    ensure(dialogs.len() == 20, || format!("{} dialogs", dialogs.len()))?;
    for (p, d) in passages.iter().zip(&dialogs) {
        ensure(validate_dialog(d).is_empty(), || format!("{} violates invariants", d.id))?;
        let pairs = d.qa_pairs();
        ensure(pairs.len() == p.sentences.len(), || format!("{}: slot count", d.id))?;
        ensure(pairs.iter().zip(&p.sentences).all(|(q, s)| q.answer.text == *s), || {
            format!("{}: answers differ from source sentences", d.id)
        })?;
    }
    let (_, second) = generate(b.path(), &passages)?;
    ensure(first == second, || "rerun not byte-identical".into())?;
    within(start.elapsed(), 30)?;
    Ok("20 passages -> 20 valid dialogs, rerun byte-identical".into())
}

fn metric_oracle() -> Result<String, String> {
    use common::*;
    let start = Instant::now();
    let mut cases = 0;
    for n in 1..=5 {
        for order in permutations(n) {
            for rel in subsets(n).filter(|s| !s.is_empty() && s.len() <= 3) {
                let r = RankedRetrieval::new(
                    "q",
                    order.iter().map(|d| d.to_string()).collect(),
                    rel.iter().map(|d| d.to_string()).collect::<BTreeSet<_>>(),
                )
                .map_err(|e| e.to_string())?;
                for k in 1..=n {
                    let got = [ndcg_at_k(&r, k), map_at_k(&r, k), recall_at_k(&r, k)];
                    let want = [oracle_ndcg(&order, &rel, k), oracle_ap(&order, &rel, k), oracle_recall(&order, &rel, k)];
                    for (g, w) in got.iter().zip(want) {
                        ensure((g.unwrap() - w).abs() <= 1e-12, || format!("{order:?} {rel:?} k={k}: {g:?} vs {w}"))?;
                    }
                    cases += 1;
                }
            }
        }
    }
    within(start.elapsed(), 10)?;
    Ok(format!("{cases} (ranking, relevant set, k) cases match the brute-force oracle"))
}

fn statistics() -> Result<String, String> {
    let mut dialogs = fixture_convqa_dialogs();
    dialogs.push(grevillea());
    // 10 dialogs of 6 utterances plus one of 12: 72 / 11
    let ds = convqa_core::dataset::ConvQaDataset::from_dialogs("fixture", dialogs);
    let s = dataset_statistics(&ds).map_err(|e| e.to_string())?;
    ensure(s.num_dialogs == 11 && s.mean_turns_2dp() == "6.55", || format!("{s:?}"))?;
    match std::env::var_os("CONVQA_WIKIDIALOG2") {
        Some(path) => {
            let ds = read_dataset(&PathBuf::from(path)).map_err(|e| e.to_string())?;
            let s = dataset_statistics(&ds).map_err(|e| e.to_string())?;
            ensure(s.num_dialogs == 113_678 && s.mean_turns_2dp() == "9.85", || {
                format!("{} dialogs, {} mean turns", s.num_dialogs, s.mean_turns_2dp())
            })?;
            Ok("fixture 6.55 mean turns; full dataset 113678 dialogs, 9.85 mean turns".into())
        }
        None => Ok("fixture 6.55 mean turns (full dataset check skipped: CONVQA_WIKIDIALOG2 unset)".into()),
    }
}

fn judge_prompt() -> Result<String, String> {
    let p = build_judge_prompt("Some passage.", "Where is it?", "What is it?", "It is here.").map_err(|e| e.to_string())?;
    let mut required: Vec<&str> = vec![INSTRUCTION, "• Context: Some passage.", "• Question A: Where is it?", "• Question B: What is it?", "• Answer: It is here."];
    required.extend(CRITERIA);
    required.extend(QUESTIONS);
    let lines: Vec<&str> = p.lines().collect();
    for r in &required {
        ensure(lines.contains(r), || format!("missing line: {r}"))?;
    }
    ensure(lines.iter().filter(|l| **l == OPTIONS_LINE).count() == 3, || "options line count".into())?;
    ensure(matches!(build_judge_prompt("", "a", "b", "c"), Err(Error::InvalidInput(_))), || "empty context accepted".into())?;
    Ok(format!("{} template lines present, 3 options lines", required.len()))
}

fn ablation_grid() -> Result<String, String> {
    let corpora = [fixture_training_corpus()];
    let passages = fixture_passages();
    let training = TrainingConfig {
        learning_rate: 0.05,
        max_steps: Some(10),
        ..Default::default()
    };
    let generation = GenerationConfig::default();
    let inputs = AblationInputs {
        corpora: &corpora,
        passages: &passages,
        training: &training,
        generation: &generation,
        extractor: &StatisticalExtractor::default(),
        scorer: &LexicalOverlapScorer,
        metrics: &[&LexicalOverlapMetric],
    };
    let table = run_ablation(&inputs, BagOfWordsBackend::default, None, Execution::Parallel).map_err(|e| e.to_string())?;
    ensure(table.cells.len() == 8, || format!("{} cells", table.cells.len()))?;
    let mut gaps = Vec::new();
    for set in TaskSet::ALL {
        let get = |rerank| {
            table
                .cell(set, rerank)
                .and_then(|c| c.metrics["lexical-overlap"])
                .ok_or_else(|| format!("missing cell {set:?} rerank={rerank}"))
        };
        let (on, off) = (get(true)?, get(false)?);
        ensure(on >= off, || format!("{}: on {on} < off {off}", set.label()))?;
        gaps.push(format!("{} +{:.3}", set.label(), on - off));
    }
    Ok(format!("8 cells; rerank gain {}", gaps.join(", ")))
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("headline-numbers", headline_numbers),
        ("format-parity", format_parity),
        ("loss-algebra", loss_algebra),
        ("overfit-smoke", overfit_smoke),
        ("rerank-dominance", rerank_dominance),
        ("end-to-end-generation", end_to_end),
        ("retrieval-metric-oracle", metric_oracle),
        ("statistics", statistics),
        ("judge-prompt", judge_prompt),
        ("ablation-grid", ablation_grid),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match (name, outcome) {
            ("headline-numbers", Ok(msg)) => println!("NOTE {name}: {msg}"),
            (_, Ok(msg)) => println!("PASS {name}: {msg}"),
            (_, Err(msg)) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
