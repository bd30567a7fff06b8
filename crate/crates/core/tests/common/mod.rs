//! Independent textbook implementations used as oracles.
#![allow(dead_code)]

/// Every permutation of `0..n`, lexicographic.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Every subset of `0..n` as a bitmask.
pub fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..(1 << n)).map(move |m| (0..n).filter(|i| m & (1 << i) != 0).collect())
}

/// Binary gains of the first `k` positions.
fn gains(ranking: &[usize], relevant: &[usize], k: usize) -> Vec<f64> {
    ranking
        .iter()
        .take(k)
        .map(|d| if relevant.contains(d) { 1.0 } else { 0.0 })
        .collect()
}

pub fn oracle_ndcg(ranking: &[usize], relevant: &[usize], k: usize) -> f64 {
    let g = gains(ranking, relevant, k);
    let dcg: f64 = g.iter().enumerate().map(|(i, x)| x / ((i + 2) as f64).log2()).sum();
    let mut ideal = vec![1.0; relevant.len()];
    ideal.resize(ranking.len().max(relevant.len()), 0.0);
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, x)| x / ((i + 2) as f64).log2()).sum();
    dcg / idcg
}

pub fn oracle_ap(ranking: &[usize], relevant: &[usize], k: usize) -> f64 {
    let g = gains(ranking, relevant, k);
    let mut total = 0.0;
    for i in 0..g.len() {
        if g[i] == 1.0 {
            let precision = g[..=i].iter().sum::<f64>() / (i + 1) as f64;
            total += precision;
        }
    }
    total / relevant.len() as f64
}

pub fn oracle_recall(ranking: &[usize], relevant: &[usize], k: usize) -> f64 {
    gains(ranking, relevant, k).iter().sum::<f64>() / relevant.len() as f64
}
