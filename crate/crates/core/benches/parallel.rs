use std::collections::BTreeSet;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use convqa_core::backend::StubBackend;
use convqa_core::corpus::CorpusKind;
use convqa_core::dialog::Passage;
use convqa_core::eval::{evaluate_dataset, LexicalOverlapMetric};
use convqa_core::fixtures::{fixture_passages, synthetic_convqa_dialogs};
use convqa_core::inpaint::{inpaint_corpus, GenerationConfig};
use convqa_core::keywords::StatisticalExtractor;
use convqa_core::render::Renderer;
use convqa_core::rerank::LexicalOverlapScorer;
use convqa_core::retrieval::{aggregate, RankedRetrieval};
use convqa_core::trainer::{ExampleStream, TrainingConfig, TrainingCorpus};
use convqa_core::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn passages(n: usize) -> Vec<Passage> {
    let base = fixture_passages();
    (0..n)
        .map(|i| {
            let mut p = base[i % base.len()].clone();
            p.id = format!("p{i:04}");
            p
        })
        .collect()
}

fn bench_inpaint(c: &mut Criterion) {
    let ps = passages(200);
    let backend = StubBackend::default();
    let extractor = StatisticalExtractor::default();
    let cfg = GenerationConfig::default();
    let mut g = c.benchmark_group("inpaint_corpus");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| inpaint_corpus("bench", &ps, &backend, &extractor, Some(&LexicalOverlapScorer), &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let ps = passages(400);
    let ds = inpaint_corpus(
        "bench",
        &ps,
        &StubBackend::default(),
        &StatisticalExtractor::default(),
        Some(&LexicalOverlapScorer),
        &GenerationConfig::default(),
        Execution::Parallel,
    )
    .unwrap()
    .dataset;
    let mut g = c.benchmark_group("evaluate_dataset");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_dataset(&ds, &[&LexicalOverlapMetric], exec).unwrap())
        });
    }
    g.finish();
}

fn bench_retrieval(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ids: Vec<String> = (0..1000).map(|i| format!("d{i}")).collect();
    let rankings: Vec<RankedRetrieval> = (0..5000)
        .map(|q| {
            let mut order = ids.clone();
            order.shuffle(&mut rng);
            order.truncate(100);
            let rel: BTreeSet<String> = ids.choose_multiple(&mut rng, 3).cloned().collect();
            RankedRetrieval::new(format!("q{q}"), order, rel).unwrap()
        })
        .collect();
    let mut g = c.benchmark_group("retrieval_metrics");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| aggregate(&rankings, &[1, 10, 100], exec).unwrap())
        });
    }
    g.finish();
}

fn bench_stream(c: &mut Criterion) {
    let corpora = vec![TrainingCorpus::new("syn", CorpusKind::ConvqaDialog, synthetic_convqa_dialogs(2000, 0))];
    let extractor = StatisticalExtractor::default();
    let mut g = c.benchmark_group("example_stream_epoch");
    for (name, exec) in MODES {
        let stream = ExampleStream::new(&corpora, &TrainingConfig::default(), Renderer::default(), &extractor, exec).unwrap();
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| stream.epoch(0).unwrap()));
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_inpaint, bench_evaluate, bench_retrieval, bench_stream
}
criterion_main!(benches);
