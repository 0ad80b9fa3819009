#![allow(dead_code)]

use delaylab_core::datagen::{gen_corpus, pack_batches, Corpus, PackedBatches, Pattern};
use delaylab_core::models::ModelSpec;

/// Textbook scalar Adam, written independently of the crate's optimizer.
pub struct RefAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl RefAdam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, theta: &mut [f64], g: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> Vec<f64> {
        self.t += 1;
        let mut deltas = Vec::with_capacity(theta.len());
        for i in 0..theta.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = self.m[i] / (1.0 - b1.powi(self.t));
            let vh = self.v[i] / (1.0 - b2.powi(self.t));
            let d = -lr * mh / (vh.sqrt() + eps);
            theta[i] += d;
            deltas.push(d);
        }
        deltas
    }
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs();
            if d == 0.0 {
                0.0
            } else {
                d / x.abs().max(y.abs())
            }
        })
        .fold(0.0, f64::max)
}

pub fn small_gru() -> ModelSpec {
    ModelSpec::GruLm { vocab: 8, embed_dim: 4, hidden: 6 }
}

pub fn small_corpus(seed: u64) -> (Corpus, PackedBatches) {
    let corpus = gen_corpus(seed, 300, 8, 3, 12, Pattern::Default).unwrap();
    let packed = pack_batches(&corpus, 60, Some(seed), 50).unwrap();
    (corpus, packed)
}
