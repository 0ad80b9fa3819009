use alloc::vec::Vec;

use rand::Rng;

use super::{backward, forward_loss, init_params, Batch, Examples, ModelSpec};
use crate::error::{Error, Result};
use crate::numerics::ParamVector;
use crate::rng;

/// Finite-difference step used by the gradient check suite.
pub const GRADCHECK_STEP: f64 = 1e-4;

/// Compares `backward` against central differences on every coordinate.
///
/// Returns the largest relative error, using `max(|analytic|, |numeric|, 1e-8)`
/// as the denominator.
pub fn grad_check(spec: &ModelSpec, params: &ParamVector, batch: &Batch, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let analytic = backward(spec, params, batch)?.grad;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let (up, _) = forward_loss(spec, &probe, batch)?;
        probe.as_mut_slice()[i] = orig - h;
        let (down, _) = forward_loss(spec, &probe, batch)?;
        probe.as_mut_slice()[i] = orig;

        let numeric = (up - down) / (2.0 * h);
        let a = analytic.as_slice()[i];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Largest acceptable relative error for `spec`'s kind at `GRADCHECK_STEP`.
pub fn gradcheck_tolerance(spec: &ModelSpec) -> f64 {
    match spec {
        ModelSpec::LinearRegression { .. } => 1e-8,
        ModelSpec::MlpClassifier { .. } => 1e-5,
        ModelSpec::GruLm { .. } => 1e-4,
    }
}

/// The model used by the suite for a kind name.
pub fn gradcheck_spec(kind: &str) -> Option<ModelSpec> {
    Some(match kind {
        "linear_regression" => ModelSpec::LinearRegression { in_dim: 4 },
        "mlp_classifier" => ModelSpec::MlpClassifier { in_dim: 3, hidden: 5, classes: 4 },
        "gru_lm" => ModelSpec::GruLm { vocab: 6, embed_dim: 3, hidden: 5 },
        _ => return None,
    })
}

fn features(d: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..d).map(|_| r.gen_range(-1.5..1.5)).collect()
}

/// Seeded random parameters and a small random batch for `spec`.
///
/// Parameters are the initializer's draw scaled by 4. At the plain init
/// scale the GRU gates are almost linear and some recurrent gradient
/// coordinates fall to ~1e-8, where the rounding noise of a central
/// difference at h = 1e-4 alone exceeds the relative tolerance.
pub fn random_instance(spec: &ModelSpec, seed: u64) -> Result<(ParamVector, Batch)> {
    let mut params = init_params(spec, seed)?;
    params.scale(4.0);
    let mut r = rng::stream(seed, &[0x9c4e]);
    let examples = match *spec {
        ModelSpec::LinearRegression { in_dim } => {
            let n = r.gen_range(1..=4);
            Examples::Regression((0..n).map(|_| (features(in_dim, &mut r), r.gen_range(-2.0..2.0))).collect())
        }
        ModelSpec::MlpClassifier { in_dim, classes, .. } => {
            let n = r.gen_range(1..=4);
            Examples::Classification((0..n).map(|_| (features(in_dim, &mut r), r.gen_range(0..classes))).collect())
        }
        ModelSpec::GruLm { vocab, .. } => Examples::Sequences(
            (0..r.gen_range(1..=2))
                .map(|_| {
                    let len = r.gen_range(3..=6);
                    (0..len).map(|_| r.gen_range(0..vocab as u32)).collect()
                })
                .collect(),
        ),
    };
    Ok((params, Batch::new(examples)?))
}

/// Max relative error of `instances` seeded checks starting at `seed`.
pub fn gradcheck_suite(spec: &ModelSpec, seed: u64, instances: u64) -> Result<Vec<f64>> {
    (0..instances)
        .map(|i| {
            let (p, b) = random_instance(spec, seed.wrapping_add(i))?;
            grad_check(spec, &p, &b, GRADCHECK_STEP)
        })
        .collect()
}
