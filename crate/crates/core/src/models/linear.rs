use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::ParamVector;

pub(super) fn segments(in_dim: usize) -> Vec<(&'static str, usize, usize)> {
    vec![("w", in_dim, in_dim)]
}

fn residual(w: &[f64], x: &[f64], y: f64) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - y
}

pub(super) fn loss(params: &ParamVector, examples: &[(Vec<f64>, f64)]) -> f64 {
    let w = params.as_slice();
    examples.iter().map(|(x, y)| {
        let r = residual(w, x, *y);
        r * r
    }).sum()
}

pub(super) fn loss_grad(params: &ParamVector, examples: &[(Vec<f64>, f64)], grad: &mut ParamVector) -> f64 {
    let w = params.as_slice();
    let g = grad.as_mut_slice();
    let mut total = 0.0;
    for (x, y) in examples {
        let r = residual(w, x, *y);
        total += r * r;
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += 2.0 * r * xi;
        }
    }
    total
}
