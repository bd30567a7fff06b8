//! A small trainable backend: hashed bag-of-words conditional unigram model.
//!
//! The input is encoded as an L2-normalized binary vector over hashed word
//! buckets. A linear layer maps it to logits over hashed target-word buckets
//! (plus an end marker). The loss of a target is the mean negative
//! log-likelihood of its tokens under that single distribution. Generation
//! ranks the template questions for the slot by their loss.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{
    fnv64, question_hints, template_questions, GenerateOptions, GeneratorBackend, UpdateStats,
    WeightedExample,
};
use crate::error::{Error, Result};
use crate::optim::{clip_grad_norm, AdamW, OptimizerConfig};
use crate::render::DEFAULT_SENTINEL;
use crate::rerank::Candidate;
use crate::text::words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowShape {
    pub feature_buckets: usize,
    pub vocab_buckets: usize,
}

impl Default for BowShape {
    fn default() -> Self {
        Self {
            feature_buckets: 1024,
            vocab_buckets: 256,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BagOfWordsBackend {
    shape: BowShape,
    sentinel: String,
    /// `feature_buckets` rows of `vocab_buckets` weights, then the bias row.
    params: Vec<f64>,
    grads: Vec<f64>,
    opt: AdamW,
}

const EOS: &str = "</s>";

#[derive(Serialize, Deserialize)]
struct BowHeader {
    shape: BowShape,
    sentinel: String,
    steps: u64,
}

impl Default for BagOfWordsBackend {
    fn default() -> Self {
        Self::new(BowShape::default())
    }
}

impl BagOfWordsBackend {
    pub const KIND: &'static str = "bow";

    pub fn new(shape: BowShape) -> Self {
        let n = (shape.feature_buckets + 1) * shape.vocab_buckets;
        Self {
            shape,
            sentinel: DEFAULT_SENTINEL.into(),
            params: vec![0.0; n],
            grads: vec![0.0; n],
            opt: AdamW::new(n),
        }
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.opt.steps()
    }

    fn features(&self, input: &str) -> Vec<(usize, f64)> {
        let mut buckets: Vec<usize> = words(input)
            .map(|w| fnv64(&[b"f", w.to_lowercase().as_bytes()]) as usize % self.shape.feature_buckets)
            .collect();
        buckets.sort_unstable();
        buckets.dedup();
        let x = if buckets.is_empty() {
            0.0
        } else {
            1.0 / (buckets.len() as f64).sqrt()
        };
        buckets.into_iter().map(|b| (b, x)).collect()
    }

    fn targets(&self, target: &str) -> Vec<usize> {
        let v = self.shape.vocab_buckets;
        words(target)
            .map(|w| fnv64(&[b"v", w.to_lowercase().as_bytes()]) as usize % v)
            .chain(std::iter::once(fnv64(&[b"v", EOS.as_bytes()]) as usize % v))
            .collect()
    }

    fn logits(&self, feats: &[(usize, f64)]) -> Vec<f64> {
        let v = self.shape.vocab_buckets;
        let bias = self.shape.feature_buckets * v;
        let mut z = self.params[bias..bias + v].to_vec();
        for &(f, x) in feats {
            let row = &self.params[f * v..(f + 1) * v];
            z.iter_mut().zip(row).for_each(|(zi, w)| *zi += x * w);
        }
        z
    }

    /// Loss and the gradient with respect to the logits.
    fn loss_and_dz(&self, feats: &[(usize, f64)], targets: &[usize]) -> (f64, Vec<f64>) {
        let z = self.logits(feats);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|zi| (zi - max).exp()).sum();
        let lse = max + sum.ln();
        let n = targets.len() as f64;
        let mean_target: f64 = targets.iter().map(|&t| z[t]).sum::<f64>() / n;
        let mut dz: Vec<f64> = z.iter().map(|zi| (zi - lse).exp()).collect();
        for &t in targets {
            dz[t] -= 1.0 / n;
        }
        (lse - mean_target, dz)
    }
}

impl GeneratorBackend for BagOfWordsBackend {
    fn kind(&self) -> &str {
        Self::KIND
    }

    fn mask_sentinel(&self) -> &str {
        &self.sentinel
    }

    fn loss(&self, input: &str, target: &str) -> Result<f64> {
        let (l, _) = self.loss_and_dz(&self.features(input), &self.targets(target));
        Ok(l)
    }

    fn generate(&self, input: &str, opts: &GenerateOptions) -> Result<Vec<Candidate>> {
        let hints = question_hints(&self.renderer(), input);
        let feats = self.features(input);
        let mut cands = template_questions(&hints)
            .into_iter()
            .map(|q| {
                let (l, _) = self.loss_and_dz(&feats, &self.targets(&q));
                Candidate::new(q, -l)
            })
            .collect::<Vec<_>>();
        cands.sort_by(|a, b| b.model_score.total_cmp(&a.model_score));
        cands.truncate(opts.beam_size);
        Ok(cands)
    }

    fn accumulate(&mut self, batch: &[WeightedExample<'_>]) -> Result<Vec<f64>> {
        let v = self.shape.vocab_buckets;
        let bias = self.shape.feature_buckets * v;
        let mut losses = Vec::with_capacity(batch.len());
        for w in batch {
            let feats = self.features(&w.example.input_text);
            let (l, dz) = self.loss_and_dz(&feats, &self.targets(&w.example.target_text));
            if !l.is_finite() {
                return Err(Error::Backend(format!("non-finite loss for {:?}", w.example.input_text)));
            }
            losses.push(l);
            if w.weight == 0.0 {
                continue;
            }
            for &(f, x) in &feats {
                let row = &mut self.grads[f * v..(f + 1) * v];
                row.iter_mut().zip(&dz).for_each(|(g, d)| *g += w.weight * x * d);
            }
            self.grads[bias..bias + v]
                .iter_mut()
                .zip(&dz)
                .for_each(|(g, d)| *g += w.weight * d);
        }
        Ok(losses)
    }

    fn apply_update(&mut self, opt: &OptimizerConfig, lr: f64) -> Result<UpdateStats> {
        let grad_norm = clip_grad_norm(&mut self.grads, opt.max_grad_norm);
        if !grad_norm.is_finite() {
            return Err(Error::Backend("non-finite gradient".into()));
        }
        self.opt.step(&mut self.params, &self.grads, opt, lr);
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        Ok(UpdateStats { grad_norm, lr })
    }

    fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let header = BowHeader {
            shape: self.shape,
            sentinel: self.sentinel.clone(),
            steps: self.opt.steps(),
        };
        fs::write(dir.join("bow.json"), serde_json::to_vec_pretty(&header)?)?;
        let bytes: Vec<u8> = self.params.iter().flat_map(|p| p.to_le_bytes()).collect();
        fs::write(dir.join("bow.params"), bytes)?;
        Ok(())
    }

    fn load(&mut self, dir: &Path) -> Result<()> {
        let header: BowHeader = serde_json::from_slice(&fs::read(dir.join("bow.json"))?)?;
        let bytes = fs::read(dir.join("bow.params"))?;
        let n = (header.shape.feature_buckets + 1) * header.shape.vocab_buckets;
        if bytes.len() != n * 8 {
            return Err(Error::Backend(format!(
                "parameter blob has {} bytes, expected {}",
                bytes.len(),
                n * 8
            )));
        }
        *self = Self::new(header.shape);
        self.sentinel = header.sentinel;
        self.params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{Task, TrainingExample};

    fn ex(input: &str, target: &str) -> TrainingExample {
        TrainingExample {
            input_text: input.into(),
            target_text: target.into(),
            task: Task::Dr,
            source_dialog_id: "d".into(),
        }
    }

    #[test]
    fn initial_loss_is_uniform() {
        let b = BagOfWordsBackend::default();
        let l = b.loss("anything", "at all").unwrap();
        assert!((l - (256f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let mut b = BagOfWordsBackend::new(BowShape { feature_buckets: 8, vocab_buckets: 6 });
        for (i, p) in b.params.iter_mut().enumerate() {
            *p = ((i * 37 % 11) as f64 - 5.0) / 10.0;
        }
        let e = ex("User: where is it Agent: here", "the shrub grows");
        b.accumulate(&[WeightedExample { example: &e, weight: 1.0 }]).unwrap();
        let analytic = b.grads.clone();
        let h = 1e-6;
        for i in 0..b.params.len() {
            let orig = b.params[i];
            b.params[i] = orig + h;
            let up = b.loss(&e.input_text, &e.target_text).unwrap();
            b.params[i] = orig - h;
            let down = b.loss(&e.input_text, &e.target_text).unwrap();
            b.params[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            assert!((numeric - analytic[i]).abs() < 1e-6, "param {i}: {numeric} vs {}", analytic[i]);
        }
    }

    #[test]
    fn training_reduces_loss_and_roundtrips() {
        let mut b = BagOfWordsBackend::default();
        let e = ex("User: <extra_id_0> Agent: It will regenerate from seed only.", "How does it regenerate?");
        let before = b.loss(&e.input_text, &e.target_text).unwrap();
        let cfg = OptimizerConfig::default();
        for _ in 0..50 {
            b.accumulate(&[WeightedExample { example: &e, weight: 1.0 }]).unwrap();
            b.apply_update(&cfg, 0.05).unwrap();
        }
        let after = b.loss(&e.input_text, &e.target_text).unwrap();
        assert!(after < 0.5 * before, "{before} -> {after}");

        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        let mut c = BagOfWordsBackend::new(BowShape { feature_buckets: 4, vocab_buckets: 4 });
        c.load(dir.path()).unwrap();
        assert_eq!(c.loss(&e.input_text, &e.target_text).unwrap(), after);
    }

    #[test]
    fn zero_weight_leaves_gradient_untouched() {
        let mut b = BagOfWordsBackend::default();
        let e = ex("a b", "c");
        b.accumulate(&[WeightedExample { example: &e, weight: 0.0 }]).unwrap();
        assert!(b.grads.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn generation_sorted() {
        let b = BagOfWordsBackend::default();
        let c = b
            .generate("User: Keyword: seed <extra_id_0> Agent: It will regenerate from seed only.", &GenerateOptions::default())
            .unwrap();
        assert!(!c.is_empty() && c.len() <= 5);
        assert!(c.windows(2).all(|w| w[0].model_score >= w[1].model_score));
    }
}
