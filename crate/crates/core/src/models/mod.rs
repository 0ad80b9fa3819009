//! Small differentiable models with analytic gradients.
//!
//! All losses are SUM-reduced over tokens (sequence model) or examples
//! (the others). Summing keeps the gradient of a concatenated batch equal
//! to the sum of its parts' gradients, which is what delayed updates rely
//! on; the per-token mean is recovered at the optimizer from token counts.

mod gradcheck;
mod gru;
mod linear;
mod mlp;

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{ParamLayout, ParamVector};
use crate::rng;

pub use gradcheck::{grad_check, gradcheck_spec, gradcheck_suite, gradcheck_tolerance, random_instance, GRADCHECK_STEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum ModelSpec {
    /// `y ≈ w·x`, squared error.
    LinearRegression { in_dim: usize },
    /// One tanh hidden layer, softmax cross-entropy.
    MlpClassifier { in_dim: usize, hidden: usize, classes: usize },
    /// Single-layer GRU next-token language model.
    GruLm { vocab: usize, embed_dim: usize, hidden: usize },
}

impl ModelSpec {
    pub const DEFAULT_GRU: ModelSpec = ModelSpec::GruLm { vocab: 16, embed_dim: 8, hidden: 16 };

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::LinearRegression { .. } => "linear_regression",
            ModelSpec::MlpClassifier { .. } => "mlp_classifier",
            ModelSpec::GruLm { .. } => "gru_lm",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims: &[usize] = match self {
            ModelSpec::LinearRegression { in_dim } => &[*in_dim],
            ModelSpec::MlpClassifier { in_dim, hidden, classes } => &[*in_dim, *hidden, *classes],
            ModelSpec::GruLm { vocab, embed_dim, hidden } => {
                if *vocab < 2 {
                    return Err(Error::invalid("gru_lm vocab must be at least 2"));
                }
                &[*vocab, *embed_dim, *hidden]
            }
        };
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("model dimensions must be at least 1"));
        }
        Ok(())
    }

    /// `(segment name, length, fan-in used by the initializer)`.
    fn segment_table(&self) -> Vec<(&'static str, usize, usize)> {
        match *self {
            ModelSpec::LinearRegression { in_dim } => linear::segments(in_dim),
            ModelSpec::MlpClassifier { in_dim, hidden, classes } => mlp::segments(in_dim, hidden, classes),
            ModelSpec::GruLm { vocab, embed_dim, hidden } => gru::segments(vocab, embed_dim, hidden),
        }
    }

    pub fn layout(&self) -> Result<Arc<ParamLayout>> {
        self.validate()?;
        let table = self.segment_table();
        Ok(Arc::new(ParamLayout::new(table.into_iter().map(|(n, l, _)| (n, l)))?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Examples {
    Regression(Vec<(Vec<f64>, f64)>),
    Classification(Vec<(Vec<f64>, usize)>),
    Sequences(Vec<Vec<u32>>),
}

/// A mini-batch. `token_count` is the number of loss terms: tokens for
/// sequences, examples otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    examples: Examples,
    token_count: usize,
}

impl Batch {
    pub fn new(examples: Examples) -> Result<Self> {
        let token_count = match &examples {
            Examples::Regression(v) => v.len(),
            Examples::Classification(v) => v.len(),
            Examples::Sequences(v) => v.iter().map(Vec::len).sum(),
        };
        if token_count == 0 {
            return Err(Error::Empty("batch has no tokens"));
        }
        Ok(Self { examples, token_count })
    }

    pub fn sequences(seqs: Vec<Vec<u32>>) -> Result<Self> {
        Self::new(Examples::Sequences(seqs))
    }

    pub fn examples(&self) -> &Examples {
        &self.examples
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    /// Union of two batches of the same kind.
    pub fn concat(&self, other: &Batch) -> Result<Batch> {
        let examples = match (&self.examples, &other.examples) {
            (Examples::Regression(a), Examples::Regression(b)) => {
                Examples::Regression(a.iter().chain(b).cloned().collect())
            }
            (Examples::Classification(a), Examples::Classification(b)) => {
                Examples::Classification(a.iter().chain(b).cloned().collect())
            }
            (Examples::Sequences(a), Examples::Sequences(b)) => {
                Examples::Sequences(a.iter().chain(b).cloned().collect())
            }
            _ => return Err(Error::invalid("cannot concatenate batches of different kinds")),
        };
        Batch::new(examples)
    }

    fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        let ok = match (spec, &self.examples) {
            (ModelSpec::LinearRegression { in_dim }, Examples::Regression(v)) => {
                v.iter().all(|(x, _)| x.len() == *in_dim)
            }
            (ModelSpec::MlpClassifier { in_dim, classes, .. }, Examples::Classification(v)) => {
                v.iter().all(|(x, y)| x.len() == *in_dim && y < classes)
            }
            (ModelSpec::GruLm { vocab, .. }, Examples::Sequences(v)) => {
                v.iter().flatten().all(|&t| (t as usize) < *vocab)
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(alloc::format!("batch does not match {} model", spec.kind_name())))
        }
    }
}

/// Summed loss, its gradient, and the number of loss terms.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: ParamVector,
    pub tokens: usize,
}

/// Uniform(-0.5/√fan_in, 0.5/√fan_in) per segment, one ChaCha stream
/// walked in layout order.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    let layout = spec.layout()?;
    let table = spec.segment_table();
    let mut params = ParamVector::zeros_like(&layout);
    let mut rng = rng::stream(seed, &[0x1417]);
    for seg in layout.segments() {
        let fan_in = table.iter().find(|(n, _, _)| *n == seg.name).map(|t| t.2).unwrap_or(1);
        let bound = 0.5 / libm::sqrt(fan_in as f64);
        for v in &mut params.as_mut_slice()[seg.range()] {
            *v = rng.gen_range(-bound..=bound);
        }
    }
    Ok(params)
}

fn prepare(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<()> {
    let layout = spec.layout()?;
    if params.len() != layout.total_len() || **params.layout() != *layout {
        return Err(Error::LayoutMismatch { expected: layout.total_len(), found: params.len() });
    }
    params.check_finite()?;
    batch.check_against(spec)
}

fn finite_loss(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite { segment: "loss".into() })
    }
}

/// Summed loss over the batch and its token count.
pub fn forward_loss(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<(f64, usize)> {
    prepare(spec, params, batch)?;
    let loss = match (spec, batch.examples()) {
        (ModelSpec::LinearRegression { .. }, Examples::Regression(ex)) => linear::loss(params, ex),
        (&ModelSpec::MlpClassifier { in_dim, hidden, classes }, Examples::Classification(ex)) => {
            mlp::loss(params, ex, in_dim, hidden, classes)
        }
        (&ModelSpec::GruLm { vocab, embed_dim, hidden }, Examples::Sequences(seqs)) => {
            gru::loss(params, seqs, vocab, embed_dim, hidden)
        }
        _ => unreachable!("checked by prepare"),
    };
    Ok((finite_loss(loss)?, batch.token_count()))
}

/// Analytic gradient of the summed loss (full BPTT for the GRU).
pub fn backward(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<LossGrad> {
    prepare(spec, params, batch)?;
    let mut grad = ParamVector::zeros_like(params.layout());
    let loss = match (spec, batch.examples()) {
        (ModelSpec::LinearRegression { .. }, Examples::Regression(ex)) => {
            linear::loss_grad(params, ex, &mut grad)
        }
        (&ModelSpec::MlpClassifier { in_dim, hidden, classes }, Examples::Classification(ex)) => {
            mlp::loss_grad(params, ex, &mut grad, in_dim, hidden, classes)
        }
        (&ModelSpec::GruLm { vocab, embed_dim, hidden }, Examples::Sequences(seqs)) => {
            gru::loss_grad(params, seqs, &mut grad, vocab, embed_dim, hidden)
        }
        _ => unreachable!("checked by prepare"),
    };
    let loss = finite_loss(loss)?;
    grad.check_finite()?;
    Ok(LossGrad { loss, grad, tokens: batch.token_count() })
}

// Dense helpers shared by the models. Matrices are row-major `rows x cols`.

/// `out += W x`
pub(crate) fn matvec_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ y`
pub(crate) fn matvec_t_acc(w: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    for (&yi, row) in y.iter().zip(w.chunks_exact(cols)) {
        if yi != 0.0 {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
    }
}

/// `dW += y ⊗ x`
pub(crate) fn outer_acc(dw: &mut [f64], cols: usize, y: &[f64], x: &[f64]) {
    for (&yi, row) in y.iter().zip(dw.chunks_exact_mut(cols)) {
        if yi != 0.0 {
            for (d, &xj) in row.iter_mut().zip(x) {
                *d += yi * xj;
            }
        }
    }
}

/// Writes softmax(logits) into `probs` and returns log-sum-exp.
pub(crate) fn softmax(logits: &[f64], probs: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &l) in probs.iter_mut().zip(logits) {
        *p = libm::exp(l - max);
        sum += *p;
    }
    probs.iter_mut().for_each(|p| *p /= sum);
    max + libm::log(sum)
}

/// Splits a flat buffer into per-segment mutable slices, in layout order.
pub(crate) fn split_segments_mut<'a>(layout: &ParamLayout, mut values: &'a mut [f64]) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(layout.segments().len());
    for seg in layout.segments() {
        let (head, tail) = values.split_at_mut(seg.len);
        out.push(head);
        values = tail;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = ModelSpec::LinearRegression { in_dim: 3 };
        assert_eq!(init_params(&spec, 7).unwrap(), init_params(&spec, 7).unwrap());
        assert_ne!(init_params(&spec, 7).unwrap(), init_params(&spec, 8).unwrap());

        let gru = ModelSpec::GruLm { vocab: 8, embed_dim: 4, hidden: 4 };
        let p = init_params(&gru, 1).unwrap();
        assert_eq!(p.len(), gru.layout().unwrap().total_len());

        let mlp = ModelSpec::MlpClassifier { in_dim: 2, hidden: 4, classes: 2 };
        let p = init_params(&mlp, 0).unwrap();
        assert!(p.as_slice().iter().all(|v| (-0.5..=0.5).contains(v)));
        // w2 has fan-in 4, so its bound is 0.25.
        assert!(p.segment("w2").unwrap().iter().all(|v| v.abs() <= 0.25));
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::GruLm { vocab: 1, embed_dim: 4, hidden: 4 }.validate().is_err());
        assert!(ModelSpec::MlpClassifier { in_dim: 2, hidden: 0, classes: 2 }.validate().is_err());
        assert!(ModelSpec::LinearRegression { in_dim: 0 }.layout().is_err());
    }

    #[test]
    fn linear_hand_values() {
        let spec = ModelSpec::LinearRegression { in_dim: 1 };
        let layout = spec.layout().unwrap();
        let w = ParamVector::from_values(&layout, vec![1.0]).unwrap();
        let batch = Batch::new(Examples::Regression(vec![(vec![2.0], 5.0)])).unwrap();
        assert_eq!(forward_loss(&spec, &w, &batch).unwrap(), (9.0, 1));
        let lg = backward(&spec, &w, &batch).unwrap();
        assert_eq!(lg.grad.as_slice(), &[-12.0]);
        assert_eq!(lg.loss, 9.0);
    }

    #[test]
    fn zero_gru_is_uniform() {
        let spec = ModelSpec::GruLm { vocab: 8, embed_dim: 4, hidden: 4 };
        let zero = ParamVector::zeros_like(&spec.layout().unwrap());
        let batch = Batch::sequences(vec![vec![1, 2, 3], vec![7, 0, 0, 5, 1]]).unwrap();
        let (loss, n) = forward_loss(&spec, &zero, &batch).unwrap();
        assert_eq!(n, 8);
        assert!((loss / n as f64 - libm::log(8.0)).abs() < 1e-12);
        assert!((libm::log(8.0) - 2.0794).abs() < 1e-4);
    }

    #[test]
    fn duplicated_batch_doubles_gradient() {
        let spec = ModelSpec::MlpClassifier { in_dim: 2, hidden: 3, classes: 3 };
        let p = init_params(&spec, 4).unwrap();
        let b = Batch::new(Examples::Classification(vec![(vec![0.3, -1.0], 2), (vec![1.5, 0.2], 0)])).unwrap();
        let single = backward(&spec, &p, &b).unwrap();
        let double = backward(&spec, &p, &b.concat(&b).unwrap()).unwrap();
        for (s, d) in single.grad.as_slice().iter().zip(double.grad.as_slice()) {
            assert!((2.0 * s - d).abs() <= 1e-14 * d.abs().max(1.0));
        }
        assert_eq!(double.tokens, 2 * single.tokens);
    }

    #[test]
    fn errors() {
        let spec = ModelSpec::GruLm { vocab: 4, embed_dim: 2, hidden: 2 };
        let mut p = init_params(&spec, 0).unwrap();
        let bad_token = Batch::sequences(vec![vec![1, 4]]).unwrap();
        assert!(matches!(forward_loss(&spec, &p, &bad_token), Err(Error::Invalid(_))));
        assert!(Batch::sequences(vec![vec![]]).is_err());

        p.segment_mut("u_r").unwrap()[0] = f64::INFINITY;
        let ok = Batch::sequences(vec![vec![1, 2]]).unwrap();
        assert_eq!(forward_loss(&spec, &p, &ok), Err(Error::NonFinite { segment: "u_r".into() }));

        let other = init_params(&ModelSpec::LinearRegression { in_dim: 3 }, 0).unwrap();
        assert!(matches!(backward(&spec, &other, &ok), Err(Error::LayoutMismatch { .. })));
    }
}
