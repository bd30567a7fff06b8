//! Query-passage pairs from generated questions and zero-shot retrieval evaluation.
//!
//! Retrievers are plug-ins. The guaranteed surface here is pair building and
//! the ranking metrics (binary relevance, cut at k).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::fnv64;
use crate::dataset::ConvQaDataset;
use crate::dialog::Passage;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::text::content_words;

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPassagePair {
    /// `<dialog id>#<question utterance index>`.
    pub query_id: String,
    pub query: String,
    pub passage_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub passage_text: String,
}

/// Id → text lookup for the source corpus.
pub fn passage_map(passages: &[Passage]) -> BTreeMap<String, String> {
    passages.iter().map(|p| (p.id.clone(), p.joined())).collect()
}

/// One pair per question turn, in dataset order, truncated to `cap`.
///
/// A dialog's passage is its `source_passage_id`, or its own id when unset.
pub fn build_pairs(
    ds: &ConvQaDataset,
    corpus: &BTreeMap<String, String>,
    cap: Option<usize>,
) -> Result<Vec<QueryPassagePair>> {
    let cap = cap.unwrap_or(usize::MAX);
    let mut out = Vec::new();
    for d in &ds.dialogs {
        if out.len() >= cap {
            break;
        }
        let pid = d.source_passage_id.as_deref().unwrap_or(&d.id);
        let text = corpus.get(pid).ok_or_else(|| Error::DanglingPassage {
            dialog_id: d.id.clone(),
            passage_id: pid.to_string(),
        })?;
        for p in d.qa_pairs() {
            if out.len() >= cap {
                break;
            }
            out.push(QueryPassagePair {
                query_id: format!("{}#{}", d.id, p.turn_index),
                query: p.question.text.clone(),
                passage_id: pid.to_string(),
                passage_text: text.clone(),
            });
        }
    }
    Ok(out)
}

pub fn write_pairs(pairs: &[QueryPassagePair], path: &Path) -> Result<()> {
    write_jsonl(pairs, path)
}

pub fn read_pairs(path: &Path) -> Result<Vec<QueryPassagePair>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRetrieval {
    pub query_id: String,
    pub ranked_passage_ids: Vec<String>,
    pub relevant_ids: BTreeSet<String>,
}

impl RankedRetrieval {
    pub fn new(
        query_id: impl Into<String>,
        ranked_passage_ids: Vec<String>,
        relevant_ids: BTreeSet<String>,
    ) -> Result<Self> {
        let query_id = query_id.into();
        let mut seen = HashSet::new();
        if let Some(dup) = ranked_passage_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invalid(format!(
                "ranking for query `{query_id}` lists `{dup}` twice"
            )));
        }
        Ok(Self {
            query_id,
            ranked_passage_ids,
            relevant_ids,
        })
    }

    fn hits(&self, k: usize) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.ranked_passage_ids
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, id)| (i + 1, self.relevant_ids.contains(id)))
    }

    fn defined(&self, k: usize) -> bool {
        k >= 1 && !self.relevant_ids.is_empty()
    }
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// `None` when the relevant set is empty or `k == 0`.
pub fn ndcg_at_k(r: &RankedRetrieval, k: usize) -> Option<f64> {
    if !r.defined(k) {
        return None;
    }
    let dcg: f64 = r.hits(k).filter(|h| h.1).map(|(rank, _)| discount(rank)).sum();
    let ideal: f64 = (1..=r.relevant_ids.len().min(k)).map(discount).sum();
    Some(dcg / ideal)
}

/// Sum of precision at each relevant rank within k, divided by |relevant|.
pub fn map_at_k(r: &RankedRetrieval, k: usize) -> Option<f64> {
    if !r.defined(k) {
        return None;
    }
    let mut found = 0usize;
    let mut sum = 0.0;
    for (rank, rel) in r.hits(k) {
        if rel {
            found += 1;
            sum += found as f64 / rank as f64;
        }
    }
    Some(sum / r.relevant_ids.len() as f64)
}

pub fn recall_at_k(r: &RankedRetrieval, k: usize) -> Option<f64> {
    if !r.defined(k) {
        return None;
    }
    let found = r.hits(k).filter(|h| h.1).count();
    Some(found as f64 / r.relevant_ids.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RankMetric {
    Ndcg,
    Map,
    Recall,
}

impl RankMetric {
    pub const ALL: [RankMetric; 3] = [RankMetric::Ndcg, RankMetric::Map, RankMetric::Recall];

    pub fn label(self, k: usize) -> String {
        let name = match self {
            RankMetric::Ndcg => "NDCG",
            RankMetric::Map => "MAP",
            RankMetric::Recall => "Recall",
        };
        format!("{name}@{k}")
    }

    pub fn compute(self, r: &RankedRetrieval, k: usize) -> Option<f64> {
        match self {
            RankMetric::Ndcg => ndcg_at_k(r, k),
            RankMetric::Map => map_at_k(r, k),
            RankMetric::Recall => recall_at_k(r, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    /// Queries with a defined score.
    pub queries: usize,
    /// Queries dropped because their relevant set was empty.
    pub excluded: usize,
    /// `NDCG@k`, `MAP@k`, `Recall@k` means.
    pub scores: BTreeMap<String, f64>,
}

/// Mean of every metric at every k over the defined queries.
pub fn aggregate(rankings: &[RankedRetrieval], ks: &[usize], exec: Execution) -> Result<RetrievalScores> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("k values must be non-empty and ≥ 1".into()));
    }
    let rows: Vec<Option<Vec<f64>>> = exec.map(rankings, |r| {
        if r.relevant_ids.is_empty() {
            return None;
        }
        Some(
            ks.iter()
                .flat_map(|&k| RankMetric::ALL.map(|m| m.compute(r, k).expect("defined")))
                .collect(),
        )
    });
    let defined: Vec<&Vec<f64>> = rows.iter().flatten().collect();
    let excluded = rows.len() - defined.len();
    if excluded > 0 {
        log::warn!("{excluded} queries have no relevant passage and were excluded");
    }
    let mut scores = BTreeMap::new();
    let labels = ks.iter().flat_map(|&k| RankMetric::ALL.map(|m| m.label(k)));
    for (col, label) in labels.enumerate() {
        let mean = if defined.is_empty() {
            0.0
        } else {
            defined.iter().map(|row| row[col]).sum::<f64>() / defined.len() as f64
        };
        scores.insert(label, mean);
    }
    Ok(RetrievalScores {
        queries: defined.len(),
        excluded,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

/// A retrieval benchmark with binary relevance judgements.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Benchmark {
    pub name: String,
    pub documents: Vec<Document>,
    pub queries: Vec<Query>,
    pub qrels: BTreeMap<String, BTreeSet<String>>,
}

impl Benchmark {
    /// Benchmark whose documents are the passages and queries the pair questions.
    pub fn from_pairs(name: impl Into<String>, pairs: &[QueryPassagePair], corpus: &BTreeMap<String, String>) -> Self {
        Self {
            name: name.into(),
            documents: corpus
                .iter()
                .map(|(id, text)| Document {
                    id: id.clone(),
                    title: String::new(),
                    text: text.clone(),
                })
                .collect(),
            queries: pairs
                .iter()
                .map(|p| Query {
                    id: p.query_id.clone(),
                    text: p.query.clone(),
                })
                .collect(),
            qrels: pairs
                .iter()
                .map(|p| (p.query_id.clone(), BTreeSet::from([p.passage_id.clone()])))
                .collect(),
        }
    }

    /// Reads a BEIR-layout directory: `corpus.jsonl`, `queries.jsonl`, `qrels/<split>.tsv`.
    pub fn load_beir(dir: &Path, split: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct RawDoc {
            #[serde(rename = "_id")]
            id: String,
            #[serde(default)]
            title: String,
            text: String,
        }
        #[derive(Deserialize)]
        struct RawQuery {
            #[serde(rename = "_id")]
            id: String,
            text: String,
        }
        let documents = read_jsonl::<RawDoc>(&dir.join("corpus.jsonl"))?
            .into_iter()
            .map(|d| Document {
                id: d.id,
                title: d.title,
                text: d.text,
            })
            .collect();
        let qrels_path = dir.join("qrels").join(format!("{split}.tsv"));
        let qrels = read_qrels(&qrels_path)?;
        let queries = read_jsonl::<RawQuery>(&dir.join("queries.jsonl"))?
            .into_iter()
            .filter(|q| qrels.contains_key(&q.id))
            .map(|q| Query { id: q.id, text: q.text })
            .collect();
        Ok(Self {
            name: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            documents,
            queries,
            qrels,
        })
    }

    pub fn relevant(&self, query_id: &str) -> BTreeSet<String> {
        self.qrels.get(query_id).cloned().unwrap_or_default()
    }
}

fn read_qrels(path: &Path) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let file = fs::File::open(path)?;
    let mut qrels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if line.trim().is_empty() || (i == 0 && cols.first() == Some(&"query-id")) {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let [qid, did, score] = cols[..] else {
            return Err(parse_err(format!("expected 3 tab-separated columns, got {}", cols.len())));
        };
        let score: f64 = score.parse().map_err(|_| parse_err(format!("bad score `{score}`")))?;
        let entry = qrels.entry(qid.to_string()).or_default();
        if score > 0.0 {
            entry.insert(did.to_string());
        }
    }
    Ok(qrels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrieverConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub warmup_steps: usize,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-4,
            epochs: 10,
            warmup_steps: 0,
        }
    }
}

pub trait Retriever: Send + Sync {
    fn name(&self) -> &str;

    /// Trains (or re-seeds) the retriever on generated pairs.
    fn fit(&mut self, pairs: &[QueryPassagePair], cfg: &RetrieverConfig, seed: u64) -> Result<()>;

    /// Top `depth` document ids for every benchmark query, in query order.
    fn rank(&self, bench: &Benchmark, depth: usize, exec: Execution) -> Result<Vec<Vec<String>>>;
}

/// Uniformly random rankings, seeded per query.
#[derive(Debug, Clone, Default)]
pub struct RandomRetriever {
    seed: u64,
}

impl RandomRetriever {
    pub const NAME: &'static str = "random";

    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Retriever for RandomRetriever {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn fit(&mut self, _: &[QueryPassagePair], _: &RetrieverConfig, seed: u64) -> Result<()> {
        self.seed = seed;
        Ok(())
    }

    fn rank(&self, bench: &Benchmark, depth: usize, exec: Execution) -> Result<Vec<Vec<String>>> {
        let ids: Vec<&str> = bench.documents.iter().map(|d| d.id.as_str()).collect();
        Ok(exec.map(&bench.queries, |q| {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv64(&[&self.seed.to_le_bytes(), q.id.as_bytes()]));
            let mut order = ids.clone();
            order.shuffle(&mut rng);
            order.into_iter().take(depth).map(str::to_string).collect()
        }))
    }
}

/// TF-IDF cosine ranking over content words; ignores training pairs.
#[derive(Debug, Clone, Default)]
pub struct LexicalRetriever;

impl LexicalRetriever {
    pub const NAME: &'static str = "tfidf";
}

type SparseVec = HashMap<String, f64>;

fn tfidf(tokens: &[String], idf: &HashMap<String, f64>) -> SparseVec {
    let mut v: SparseVec = HashMap::new();
    for t in tokens {
        if let Some(w) = idf.get(t) {
            *v.entry(t.clone()).or_default() += w;
        }
    }
    let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.values_mut().for_each(|x| *x /= norm);
    }
    v
}

impl Retriever for LexicalRetriever {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn fit(&mut self, _: &[QueryPassagePair], _: &RetrieverConfig, _: u64) -> Result<()> {
        Ok(())
    }

    fn rank(&self, bench: &Benchmark, depth: usize, exec: Execution) -> Result<Vec<Vec<String>>> {
        let doc_tokens: Vec<Vec<String>> = exec.map(&bench.documents, |d| {
            content_words(&format!("{} {}", d.title, d.text))
        });
        let n = doc_tokens.len() as f64;
        let mut df: HashMap<&str, usize> = HashMap::new();
        for toks in &doc_tokens {
            let uniq: HashSet<&str> = toks.iter().map(String::as_str).collect();
            for t in uniq {
                *df.entry(t).or_default() += 1;
            }
        }
        let idf: HashMap<String, f64> = df
            .into_iter()
            .map(|(t, c)| (t.to_string(), ((n + 1.0) / (c as f64 + 1.0)).ln() + 1.0))
            .collect();
        let doc_vecs: Vec<SparseVec> = exec.map(&doc_tokens, |t| tfidf(t, &idf));
        Ok(exec.map(&bench.queries, |q| {
            let qv = tfidf(&content_words(&q.text), &idf);
            let mut scored: Vec<(usize, f64)> = doc_vecs
                .iter()
                .enumerate()
                .map(|(i, dv)| (i, qv.iter().map(|(t, w)| w * dv.get(t).unwrap_or(&0.0)).sum()))
                .collect();
            // stable: ties keep corpus order
            scored.sort_by(|a, b| b.1.total_cmp(&a.1));
            scored
                .into_iter()
                .take(depth)
                .map(|(i, _)| bench.documents[i].id.clone())
                .collect()
        }))
    }
}

pub fn retriever_by_name(name: &str) -> Result<Box<dyn Retriever>> {
    match name {
        RandomRetriever::NAME => Ok(Box::new(RandomRetriever::default())),
        LexicalRetriever::NAME => Ok(Box::new(LexicalRetriever)),
        other => Err(Error::Unavailable {
            name: other.into(),
            advice: "dense retrievers are external plug-ins; evaluate their output with a static ranking file".into(),
        }),
    }
}

/// One line per query: `{"query_id": ..., "ranked": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticRanking {
    pub query_id: String,
    pub ranked: Vec<String>,
}

pub fn read_static_rankings(path: &Path) -> Result<Vec<StaticRanking>> {
    read_jsonl(path)
}

pub fn write_static_rankings(rankings: &[StaticRanking], path: &Path) -> Result<()> {
    write_jsonl(rankings, path)
}

/// Joins rankings with benchmark judgements; queries without a ranking get an empty list.
pub fn judge_rankings(bench: &Benchmark, rankings: &[StaticRanking]) -> Result<Vec<RankedRetrieval>> {
    let by_id: HashMap<&str, &StaticRanking> = rankings.iter().map(|r| (r.query_id.as_str(), r)).collect();
    bench
        .queries
        .iter()
        .map(|q| {
            let ranked = by_id.get(q.id.as_str()).map(|r| r.ranked.clone()).unwrap_or_default();
            RankedRetrieval::new(q.id.clone(), ranked, bench.relevant(&q.id))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZeroShotConfig {
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
    pub retriever: RetrieverConfig,
}

impl Default for ZeroShotConfig {
    fn default() -> Self {
        Self {
            ks: vec![DEFAULT_K],
            seeds: vec![0],
            retriever: RetrieverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub result: RetrievalScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotTable {
    pub retriever: String,
    pub benchmark: String,
    pub ks: Vec<usize>,
    pub rows: Vec<SeedRow>,
    pub summary: BTreeMap<String, MeanStd>,
}

impl ZeroShotTable {
    fn from_rows(retriever: &str, bench: &Benchmark, ks: &[usize], rows: Vec<SeedRow>) -> Self {
        let labels: Vec<String> = rows[0].result.scores.keys().cloned().collect();
        let summary = labels
            .into_iter()
            .map(|l| {
                let vals: Vec<f64> = rows.iter().map(|r| r.result.scores[&l]).collect();
                (l, MeanStd::of(&vals))
            })
            .collect();
        Self {
            retriever: retriever.into(),
            benchmark: bench.name.clone(),
            ks: ks.to_vec(),
            rows,
            summary,
        }
    }

    pub fn to_markdown(&self) -> String {
        let labels: Vec<&String> = self.summary.keys().collect();
        let mut s = format!("| seed | {} |\n", labels.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(" | "));
        s.push_str(&format!("|---|{}\n", "---|".repeat(labels.len())));
        for r in &self.rows {
            let cells: Vec<String> = labels.iter().map(|l| format!("{:.4}", r.result.scores[*l])).collect();
            s.push_str(&format!("| {} | {} |\n", r.seed, cells.join(" | ")));
        }
        let cells: Vec<String> = labels
            .iter()
            .map(|l| format!("{:.4} ± {:.4}", self.summary[*l].mean, self.summary[*l].std))
            .collect();
        s.push_str(&format!("| mean | {} |\n", cells.join(" | ")));
        s
    }
}

/// Fits the retriever once per seed on `pairs` and scores it on `bench`.
pub fn run_zeroshot_eval(
    pairs: &[QueryPassagePair],
    retriever: &mut dyn Retriever,
    bench: &Benchmark,
    cfg: &ZeroShotConfig,
    exec: Execution,
) -> Result<ZeroShotTable> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let depth = cfg.ks.iter().copied().max().unwrap_or(DEFAULT_K);
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        retriever.fit(pairs, &cfg.retriever, seed)?;
        let ranked = retriever.rank(bench, depth, exec)?;
        if ranked.len() != bench.queries.len() {
            return Err(Error::Backend(format!(
                "retriever `{}` ranked {} of {} queries",
                retriever.name(),
                ranked.len(),
                bench.queries.len()
            )));
        }
        let judged: Vec<RankedRetrieval> = bench
            .queries
            .iter()
            .zip(ranked)
            .map(|(q, ids)| RankedRetrieval::new(q.id.clone(), ids, bench.relevant(&q.id)))
            .collect::<Result<_>>()?;
        rows.push(SeedRow {
            seed,
            result: aggregate(&judged, &cfg.ks, exec)?,
        });
    }
    Ok(ZeroShotTable::from_rows(retriever.name(), bench, &cfg.ks, rows))
}

/// Scores a precomputed ranking file; the fallback when no retriever plug-in is available.
pub fn evaluate_static(
    bench: &Benchmark,
    rankings: &[StaticRanking],
    ks: &[usize],
    exec: Execution,
) -> Result<ZeroShotTable> {
    let judged = judge_rankings(bench, rankings)?;
    let row = SeedRow {
        seed: 0,
        result: aggregate(&judged, ks, exec)?,
    };
    Ok(ZeroShotTable::from_rows("static", bench, ks, vec![row]))
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
