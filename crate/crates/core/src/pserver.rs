//! Sharded global parameter store.
//!
//! Worker `i` is the parameter server for shard `i`: a contiguous range of
//! the flat vector with its own Adam state. A group push runs the global
//! optimizer over every shard; a local write adds a delta to one shard
//! without touching the global optimizer state or the update counter.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::numerics::ParamVector;
use crate::optim::{adam_step_slice, AdamState, HyperParams};
use crate::schedules::{LrMode, TrainSchedule};

/// `N + 1` boundaries with `b_i = floor(i · total_len / N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardTable {
    boundaries: Vec<usize>,
}

impl ShardTable {
    pub fn new(total_len: usize, n_shards: usize) -> Result<Self> {
        if n_shards == 0 {
            return Err(Error::invalid("need at least one shard"));
        }
        let boundaries = (0..=n_shards)
            .map(|i| ((i as u128 * total_len as u128) / n_shards as u128) as usize)
            .collect();
        Ok(Self { boundaries })
    }

    pub fn n_shards(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn total_len(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn range(&self, shard: usize) -> Range<usize> {
        self.boundaries[shard]..self.boundaries[shard + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.boundaries.windows(2).map(|w| w[0]..w[1])
    }
}

pub fn shard_bounds(total_len: usize, n_workers: usize) -> Result<ShardTable> {
    ShardTable::new(total_len, n_workers)
}

/// Running sum of micro-batch gradients over one τ-group.
#[derive(Debug, Clone)]
pub struct GradAccumulator {
    sum: ParamVector,
    tokens: usize,
    microbatches: usize,
    loss: f64,
}

impl GradAccumulator {
    pub fn new(template: &ParamVector) -> Self {
        Self { sum: ParamVector::zeros_like(template.layout()), tokens: 0, microbatches: 0, loss: 0.0 }
    }

    pub fn reset(&mut self) {
        self.sum.fill(0.0);
        self.tokens = 0;
        self.microbatches = 0;
        self.loss = 0.0;
    }

    pub fn accumulate(&mut self, grad: &ParamVector, tokens: usize) -> Result<()> {
        self.sum.axpy_in_place(1.0, grad)?;
        self.tokens += tokens;
        self.microbatches += 1;
        Ok(())
    }

    /// Adds the summed loss that produced the last gradient (reporting only).
    pub fn add_loss(&mut self, loss: f64) {
        self.loss += loss;
    }

    pub fn sum(&self) -> &ParamVector {
        &self.sum
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn microbatches(&self) -> usize {
        self.microbatches
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    /// What the global optimizer consumes.
    pub fn effective_gradient(&self, mode: LrMode) -> ParamVector {
        let mut g = self.sum.clone();
        if mode == LrMode::MeanTokens && self.tokens > 0 {
            let n = self.tokens as f64;
            g.as_mut_slice().iter_mut().for_each(|v| *v /= n);
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PushRecord {
    pub push_index: u64,
    pub worker: usize,
    pub sim_time: f64,
    pub u_pull: u64,
    pub u_apply: u64,
    pub staleness: u64,
    pub tokens: usize,
}

/// Who is pushing, when, and under which schedule.
#[derive(Debug, Clone, Copy)]
pub struct PushContext<'a> {
    pub worker: usize,
    pub sim_time: f64,
    pub schedule: &'a TrainSchedule,
    /// Micro-batches per push (`τ`, or `N·τ` for synchronous steps).
    pub tau: usize,
}

/// Operations a worker needs from a parameter server.
pub trait ParamServer {
    fn shard_range(&self, worker: usize) -> Range<usize>;
    /// Completed group pushes.
    fn updates(&self) -> u64;
    fn pull(&self) -> (ParamVector, u64);
    /// Applies one group gradient; returns the update counter after it.
    fn push_group(&mut self, acc: &GradAccumulator, u_pull: u64, ctx: &PushContext<'_>) -> Result<u64>;
    fn local_shard_write(&mut self, worker: usize, delta: &[f64]) -> Result<()>;
}

/// Preconditions shared by every store implementation.
pub fn check_push(acc: &GradAccumulator, params: &ParamVector, u_pull: u64, u: u64, tau: usize) -> Result<()> {
    if acc.microbatches() != tau {
        return Err(Error::invalid(alloc::format!(
            "group push needs {tau} micro-batches, accumulator has {}",
            acc.microbatches()
        )));
    }
    if u_pull > u {
        return Err(Error::invalid("u_pull is ahead of the store"));
    }
    params.check_layout(acc.sum())
}

/// Single-context store used by the deterministic simulator.
#[derive(Debug, Clone)]
pub struct GlobalStore {
    params: ParamVector,
    shards: ShardTable,
    adam: Vec<AdamState>,
    beta2: f64,
    eps: f64,
    u: u64,
    log: Vec<PushRecord>,
}

impl GlobalStore {
    pub fn new(params: ParamVector, n_workers: usize, beta2: f64, eps: f64) -> Result<Self> {
        let shards = ShardTable::new(params.len(), n_workers)?;
        let adam = shards.ranges().map(|r| AdamState::new(r.len())).collect();
        Ok(Self { params, shards, adam, beta2, eps, u: 0, log: Vec::new() })
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn shards(&self) -> &ShardTable {
        &self.shards
    }

    pub fn adam_states(&self) -> &[AdamState] {
        &self.adam
    }

    pub fn push_log(&self) -> &[PushRecord] {
        &self.log
    }

    pub fn into_parts(self) -> (ParamVector, Vec<PushRecord>) {
        (self.params, self.log)
    }

    pub fn hyper_params(&self, schedule: &TrainSchedule, t: u64, tau: usize) -> HyperParams {
        HyperParams { lr: schedule.global_lr_at(t, tau), beta1: schedule.beta1_at(t), beta2: self.beta2, eps: self.eps }
    }
}

impl ParamServer for GlobalStore {
    fn shard_range(&self, worker: usize) -> Range<usize> {
        self.shards.range(worker)
    }

    fn updates(&self) -> u64 {
        self.u
    }

    fn pull(&self) -> (ParamVector, u64) {
        (self.params.clone(), self.u)
    }

    /// Applies the group gradient shard by shard; either every shard is
    /// updated or, on a non-finite result, none is.
    fn push_group(&mut self, acc: &GradAccumulator, u_pull: u64, ctx: &PushContext<'_>) -> Result<u64> {
        check_push(acc, &self.params, u_pull, self.u, ctx.tau)?;
        let grad = acc.effective_gradient(ctx.schedule.lr_mode);
        let hp = self.hyper_params(ctx.schedule, self.u + 1, ctx.tau);

        let mut params = self.params.clone();
        let mut adam = self.adam.clone();
        for (range, state) in self.shards.ranges().zip(adam.iter_mut()) {
            adam_step_slice(&mut params.as_mut_slice()[range.clone()], &grad.as_slice()[range], state, &hp)?;
        }
        self.params = params;
        self.adam = adam;

        let u_apply = self.u;
        self.u += 1;
        self.log.push(PushRecord {
            push_index: u_apply,
            worker: ctx.worker,
            sim_time: ctx.sim_time,
            u_pull,
            u_apply,
            staleness: u_apply - u_pull,
            tokens: acc.tokens(),
        });
        Ok(self.u)
    }

    fn local_shard_write(&mut self, worker: usize, delta: &[f64]) -> Result<()> {
        if worker >= self.shards.n_shards() {
            return Err(Error::invalid("no such worker shard"));
        }
        let range = self.shards.range(worker);
        if delta.len() != range.len() {
            return Err(Error::LayoutMismatch { expected: range.len(), found: delta.len() });
        }
        for (p, d) in self.params.as_mut_slice()[range].iter_mut().zip(delta) {
            *p += d;
        }
        Ok(())
    }
}
