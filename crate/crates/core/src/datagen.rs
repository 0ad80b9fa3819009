//! Synthetic Markov corpora and token-budget batch packing.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::models::Batch;
use crate::rng;

/// Selects the order-1 transition matrix of the synthetic language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pattern {
    /// `Sparse` with a fixed seed.
    #[default]
    Default,
    /// Each token has three likely successors plus a small uniform floor.
    Sparse(u64),
    /// `i → i+1` with probability 0.9.
    Cyclic,
    /// No structure at all; the entropy floor is `ln vocab`.
    Uniform,
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Pattern::Default),
            "cyclic" => Ok(Pattern::Cyclic),
            "uniform" => Ok(Pattern::Uniform),
            _ => s
                .strip_prefix("sparse:")
                .and_then(|n| n.parse().ok())
                .map(Pattern::Sparse)
                .ok_or_else(|| Error::invalid(alloc::format!("unknown corpus pattern `{s}`"))),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Default => f.write_str("default"),
            Pattern::Sparse(seed) => write!(f, "sparse:{seed}"),
            Pattern::Cyclic => f.write_str("cyclic"),
            Pattern::Uniform => f.write_str("uniform"),
        }
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for Pattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for Pattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = <alloc::string::String as serde::Deserialize>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const DEFAULT_PATTERN_SEED: u64 = 0x5eed;

/// The generating process: uniform first token, then a fixed
/// row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSource {
    vocab: usize,
    transition: Vec<f64>,
}

impl MarkovSource {
    pub fn new(vocab: usize, pattern: Pattern) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::invalid("vocab must be at least 2"));
        }
        let v = vocab as f64;
        let mut transition = vec![0.0; vocab * vocab];
        match pattern {
            Pattern::Uniform => transition.fill(1.0 / v),
            Pattern::Cyclic => {
                for (i, row) in transition.chunks_exact_mut(vocab).enumerate() {
                    row.fill(0.1 / v);
                    row[(i + 1) % vocab] += 0.9;
                }
            }
            Pattern::Default | Pattern::Sparse(_) => {
                let seed = match pattern {
                    Pattern::Sparse(s) => s,
                    _ => DEFAULT_PATTERN_SEED,
                };
                let mut rng = rng::stream(seed, &[vocab as u64, 0x3a7]);
                let mut successors: Vec<usize> = (0..vocab).collect();
                for row in transition.chunks_exact_mut(vocab) {
                    row.fill(0.05 / v);
                    successors.shuffle(&mut rng);
                    for (&s, w) in successors.iter().zip([0.6, 0.25, 0.1]) {
                        row[s] += w;
                    }
                    // vocab 2 only has two successors; renormalize.
                    let sum: f64 = row.iter().sum();
                    row.iter_mut().for_each(|p| *p /= sum);
                }
            }
        }
        Ok(Self { vocab, transition })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, prev: usize) -> &[f64] {
        &self.transition[prev * self.vocab..(prev + 1) * self.vocab]
    }

    fn draw(rng: &mut impl Rng, probs: &[f64]) -> u32 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i as u32;
            }
        }
        (probs.len() - 1) as u32
    }

    fn sample(&self, rng: &mut impl Rng, len: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        out.push(rng.gen_range(0..self.vocab) as u32);
        while out.len() < len {
            let prev = *out.last().unwrap() as usize;
            out.push(Self::draw(rng, self.row(prev)));
        }
        out
    }

    /// Negative log-likelihood of a sentence under the true process.
    pub fn nll(&self, sentence: &[u32]) -> f64 {
        let mut total = libm::log(self.vocab as f64);
        for w in sentence.windows(2) {
            total -= libm::log(self.row(w[0] as usize)[w[1] as usize]);
        }
        if sentence.is_empty() {
            0.0
        } else {
            total
        }
    }

    /// Expected per-token cross-entropy of the true process, for sentence
    /// lengths uniform in `[len_min, len_max]`. No model can beat this in
    /// expectation.
    pub fn entropy_floor(&self, len_min: usize, len_max: usize) -> f64 {
        let row_entropy: Vec<f64> = (0..self.vocab)
            .map(|i| self.row(i).iter().filter(|&&p| p > 0.0).map(|&p| -p * libm::log(p)).sum())
            .collect();
        let v = self.vocab;
        let mut marginal = vec![1.0 / v as f64; v];
        // per_position[t] = expected entropy of the token at position t.
        let mut per_position = Vec::with_capacity(len_max);
        per_position.push(libm::log(v as f64));
        for _ in 1..len_max {
            per_position.push(marginal.iter().zip(&row_entropy).map(|(p, h)| p * h).sum());
            let mut next = vec![0.0; v];
            for (i, &p) in marginal.iter().enumerate() {
                for (n, &t) in next.iter_mut().zip(self.row(i)) {
                    *n += p * t;
                }
            }
            marginal = next;
        }
        let (mut nats, mut tokens) = (0.0, 0.0);
        for len in len_min..=len_max {
            nats += per_position[..len].iter().sum::<f64>();
            tokens += len as f64;
        }
        nats / tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
}

/// Generation parameters; together with a seed and split they determine
/// the corpus bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_sentences: usize,
    pub vocab: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub pattern: Pattern,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 {
            return Err(Error::invalid("vocab must be at least 2"));
        }
        if self.len_min == 0 || self.len_min > self.len_max {
            return Err(Error::invalid("need 1 <= len_min <= len_max"));
        }
        Ok(())
    }

    pub fn source(&self) -> Result<MarkovSource> {
        MarkovSource::new(self.vocab, self.pattern)
    }

    pub fn generate(&self, seed: u64, split: Split) -> Result<Corpus> {
        self.validate()?;
        let source = self.source()?;
        let tag = match split {
            Split::Train => 1,
            Split::Valid => 2,
        };
        let mut rng = rng::stream(seed, &[tag, 0xc0]);
        let sentences = (0..self.n_sentences)
            .map(|_| {
                let len = rng.gen_range(self.len_min..=self.len_max);
                source.sample(&mut rng, len)
            })
            .collect();
        Ok(Corpus { sentences, seed, split, vocab: self.vocab })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Vec<u32>>,
    pub seed: u64,
    pub split: Split,
    pub vocab: usize,
}

/// Training split with the given parameters.
pub fn gen_corpus(
    seed: u64,
    n_sentences: usize,
    vocab: usize,
    len_min: usize,
    len_max: usize,
    pattern: Pattern,
) -> Result<Corpus> {
    CorpusSpec { n_sentences, vocab, len_min, len_max, pattern }.generate(seed, Split::Train)
}

impl Corpus {
    pub fn total_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.sentences.iter().map(Vec::len).collect()
    }

    pub fn batch(&self, packed: &PackedBatch) -> Result<Batch> {
        Batch::sequences(packed.indices.iter().map(|&i| self.sentences[i].clone()).collect())
    }

    /// Every sentence in one batch (used for validation).
    pub fn as_batch(&self) -> Result<Batch> {
        Batch::sequences(self.sentences.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBatch {
    pub indices: Vec<usize>,
    pub tokens: usize,
    /// A single sentence longer than the word budget.
    pub oversized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBatches {
    pub batches: Vec<PackedBatch>,
    pub word_budget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackReport {
    pub word_budget: usize,
    pub batches: usize,
    pub mean_words: f64,
    pub max_words: usize,
    pub oversized: usize,
}

impl PackedBatches {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.batches.iter().map(|b| b.tokens).sum()
    }

    pub fn mean_words(&self) -> f64 {
        if self.batches.is_empty() {
            0.0
        } else {
            self.total_tokens() as f64 / self.batches.len() as f64
        }
    }

    pub fn report(&self) -> PackReport {
        PackReport {
            word_budget: self.word_budget,
            batches: self.batches.len(),
            mean_words: self.mean_words(),
            max_words: self.batches.iter().map(|b| b.tokens).max().unwrap_or(0),
            oversized: self.batches.iter().filter(|b| b.oversized).count(),
        }
    }
}

/// Packs sentences of the given lengths into batches of at most
/// `word_budget` tokens.
///
/// Order: shuffle by `seed` (kept as-is when `None`), stable-sort by length
/// inside consecutive windows of `sort_window` sentences, then fill greedily
/// in that order. A sentence that does not fit closes the current batch; a
/// sentence longer than the budget gets a flagged batch of its own.
pub fn pack_lengths(lengths: &[usize], word_budget: usize, seed: Option<u64>, sort_window: usize) -> Result<PackedBatches> {
    if word_budget == 0 {
        return Err(Error::invalid("word_budget must be at least 1"));
    }
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    if let Some(seed) = seed {
        order.shuffle(&mut rng::stream(seed, &[0xba7c]));
    }
    if sort_window > 1 {
        for window in order.chunks_mut(sort_window) {
            window.sort_by_key(|&i| lengths[i]);
        }
    }

    let mut batches = Vec::new();
    let mut current = PackedBatch { indices: Vec::new(), tokens: 0, oversized: false };
    for i in order {
        let len = lengths[i];
        if len > word_budget {
            if !current.indices.is_empty() {
                batches.push(core::mem::replace(&mut current, PackedBatch { indices: Vec::new(), tokens: 0, oversized: false }));
            }
            batches.push(PackedBatch { indices: vec![i], tokens: len, oversized: true });
            continue;
        }
        if current.tokens + len > word_budget && !current.indices.is_empty() {
            batches.push(core::mem::replace(&mut current, PackedBatch { indices: Vec::new(), tokens: 0, oversized: false }));
        }
        current.indices.push(i);
        current.tokens += len;
    }
    if !current.indices.is_empty() {
        batches.push(current);
    }
    Ok(PackedBatches { batches, word_budget })
}

pub fn pack_batches(corpus: &Corpus, word_budget: usize, seed: Option<u64>, sort_window: usize) -> Result<PackedBatches> {
    pack_lengths(&corpus.lengths(), word_budget, seed, sort_window)
}

/// Batch order for one epoch: a seeded permutation.
pub fn epoch_order(n_batches: usize, epoch_seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_batches).collect();
    order.shuffle(&mut rng::stream(epoch_seed, &[0xe90c]));
    order
}

pub fn epoch_stream(packed: &PackedBatches, epoch_seed: u64) -> Result<impl Iterator<Item = &PackedBatch>> {
    if packed.is_empty() {
        return Err(Error::Empty("no packed batches"));
    }
    Ok(epoch_order(packed.len(), epoch_seed).into_iter().map(move |i| &packed.batches[i]))
}
