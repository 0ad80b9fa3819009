//! SGD and Adam. Learning rate and β1 come from outside (the schedules), so
//! one implementation serves the sharded global optimizer and the
//! per-worker local optimizers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HyperParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps must be positive"));
        }
        Ok(())
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments for one optimizer instance. `t` counts completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Advances the state on `grad` and returns the parameter delta
    /// `-lr · m̂ / (√v̂ + ε)`. Nothing is committed if any value would be
    /// non-finite.
    pub fn delta(&mut self, grad: &[f64], hp: &HyperParams) -> Result<Vec<f64>> {
        if grad.len() != self.m.len() {
            return Err(Error::LayoutMismatch { expected: self.m.len(), found: grad.len() });
        }
        let t = self.t + 1;
        let bias1 = 1.0 - libm::pow(hp.beta1, t as f64);
        let bias2 = 1.0 - libm::pow(hp.beta2, t as f64);
        let mut m = Vec::with_capacity(grad.len());
        let mut v = Vec::with_capacity(grad.len());
        let mut delta = Vec::with_capacity(grad.len());
        for ((&g, &m0), &v0) in grad.iter().zip(&self.m).zip(&self.v) {
            let m1 = hp.beta1 * m0 + (1.0 - hp.beta1) * g;
            let v1 = hp.beta2 * v0 + (1.0 - hp.beta2) * g * g;
            let m_hat = m1 / bias1;
            let v_hat = v1 / bias2;
            let d = -hp.lr * m_hat / (libm::sqrt(v_hat) + hp.eps);
            if !d.is_finite() || !v1.is_finite() {
                return Err(Error::NonFinite { segment: "adam".into() });
            }
            m.push(m1);
            v.push(v1);
            delta.push(d);
        }
        self.m = m;
        self.v = v;
        self.t = t;
        Ok(delta)
    }
}

fn commit(params: &mut [f64], delta: &[f64]) -> Result<()> {
    if params.iter().zip(delta).any(|(p, d)| !(p + d).is_finite()) {
        return Err(Error::NonFinite { segment: "params".into() });
    }
    params.iter_mut().zip(delta).for_each(|(p, d)| *p += d);
    Ok(())
}

/// `θ ← θ − lr·g`
pub fn sgd_step(params: &mut ParamVector, grad: &ParamVector, lr: f64) -> Result<()> {
    params.check_layout(grad)?;
    let delta: Vec<f64> = grad.as_slice().iter().map(|g| -lr * g).collect();
    commit(params.as_mut_slice(), &delta)
}

pub fn adam_step(params: &mut ParamVector, grad: &ParamVector, state: &mut AdamState, hp: &HyperParams) -> Result<()> {
    params.check_layout(grad)?;
    adam_step_ranged(params, grad, state, hp, 0, params.len())
}

/// Adam on `[start, end)` only, with a state sized to that range. An empty
/// range still advances `t`.
pub fn adam_step_ranged(
    params: &mut ParamVector,
    grad: &ParamVector,
    state: &mut AdamState,
    hp: &HyperParams,
    start: usize,
    end: usize,
) -> Result<()> {
    params.check_layout(grad)?;
    if start > end || end > params.len() {
        return Err(Error::OutOfBounds { start, end, len: params.len() });
    }
    adam_step_slice(&mut params.as_mut_slice()[start..end], &grad.as_slice()[start..end], state, hp)
}

/// Slice form used by the stores, which hold raw shard buffers.
pub fn adam_step_slice(params: &mut [f64], grad: &[f64], state: &mut AdamState, hp: &HyperParams) -> Result<()> {
    if params.len() != state.len() {
        return Err(Error::LayoutMismatch { expected: state.len(), found: params.len() });
    }
    let mut trial = state.clone();
    let delta = trial.delta(grad, hp)?;
    commit(params, &delta)?;
    *state = trial;
    Ok(())
}
