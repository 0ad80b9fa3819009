//! in → tanh(hidden) → softmax(classes).
//!
//! Segments: `w1` (hidden × in), `b1`, `w2` (classes × hidden), `b2`.

use alloc::vec;
use alloc::vec::Vec;

use super::{matvec_acc, matvec_t_acc, outer_acc, softmax, split_segments_mut};
use crate::numerics::ParamVector;

pub(super) fn segments(in_dim: usize, hidden: usize, classes: usize) -> Vec<(&'static str, usize, usize)> {
    vec![
        ("b1", hidden, in_dim),
        ("b2", classes, hidden),
        ("w1", hidden * in_dim, in_dim),
        ("w2", classes * hidden, hidden),
    ]
}

struct Weights<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
}

impl<'a> Weights<'a> {
    fn of(p: &'a ParamVector) -> Self {
        let s = |n| p.segment(n).expect("mlp layout");
        Self { w1: s("w1"), b1: s("b1"), w2: s("w2"), b2: s("b2") }
    }

    /// Fills `h` and `probs`, returns the example's cross-entropy.
    fn forward(&self, x: &[f64], label: usize, h: &mut [f64], logits: &mut [f64], probs: &mut [f64]) -> f64 {
        h.copy_from_slice(self.b1);
        matvec_acc(self.w1, x.len(), x, h);
        h.iter_mut().for_each(|v| *v = libm::tanh(*v));
        logits.copy_from_slice(self.b2);
        matvec_acc(self.w2, h.len(), h, logits);
        softmax(logits, probs) - logits[label]
    }
}

pub(super) fn loss(
    params: &ParamVector,
    examples: &[(Vec<f64>, usize)],
    _in_dim: usize,
    hidden: usize,
    classes: usize,
) -> f64 {
    let w = Weights::of(params);
    let (mut h, mut logits, mut probs) = (vec![0.0; hidden], vec![0.0; classes], vec![0.0; classes]);
    examples.iter().map(|(x, y)| w.forward(x, *y, &mut h, &mut logits, &mut probs)).sum()
}

pub(super) fn loss_grad(
    params: &ParamVector,
    examples: &[(Vec<f64>, usize)],
    grad: &mut ParamVector,
    in_dim: usize,
    hidden: usize,
    classes: usize,
) -> f64 {
    let w = Weights::of(params);
    let layout = grad.layout().clone();
    // layout order: b1, b2, w1, w2
    let mut parts = split_segments_mut(&layout, grad.as_mut_slice()).into_iter();
    let (db1, db2, dw1, dw2) = (
        parts.next().unwrap(),
        parts.next().unwrap(),
        parts.next().unwrap(),
        parts.next().unwrap(),
    );
    let (mut h, mut logits, mut probs) = (vec![0.0; hidden], vec![0.0; classes], vec![0.0; classes]);
    let mut dh = vec![0.0; hidden];
    let mut total = 0.0;
    for (x, y) in examples {
        total += w.forward(x, *y, &mut h, &mut logits, &mut probs);
        let mut dlogits = probs.clone();
        dlogits[*y] -= 1.0;
        outer_acc(dw2, hidden, &dlogits, &h);
        db2.iter_mut().zip(&dlogits).for_each(|(d, g)| *d += g);
        dh.iter_mut().for_each(|v| *v = 0.0);
        matvec_t_acc(w.w2, hidden, &dlogits, &mut dh);
        for (d, hv) in dh.iter_mut().zip(&h) {
            *d *= 1.0 - hv * hv;
        }
        outer_acc(dw1, in_dim, &dh, x);
        db1.iter_mut().zip(&dh).for_each(|(d, g)| *d += g);
    }
    total
}
