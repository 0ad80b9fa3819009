//! The per-worker τ-group loop.
//!
//! A group is: pull the global model into the local replica, then for each
//! of τ micro-batches compute a gradient at the current local parameters
//! and add it to the accumulator. Between micro-batches (never after the
//! last one) and while the worker is inside its local-optimizer window, a
//! local Adam step moves the replica and is also written, unsynchronized,
//! into the worker's own shard of the global model. Finally the accumulated
//! gradient is pushed to the global optimizer.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::models::{backward, Batch, ModelSpec};
use crate::numerics::ParamVector;
use crate::optim::{AdamState, HyperParams};
use crate::pserver::{GradAccumulator, ParamServer, PushContext};
use crate::schedules::{local_lr, LrMode, TrainSchedule};

/// Outcome of one τ-group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupReport {
    pub worker: usize,
    /// Summed training loss over the group's micro-batches.
    pub loss: f64,
    pub tokens: usize,
    pub u_pull: u64,
    pub u_apply: u64,
    pub staleness: u64,
    pub local_steps: usize,
    pub sim_time: f64,
}

#[derive(Debug, Clone)]
pub struct WorkerState {
    id: usize,
    local_params: ParamVector,
    local_adam: Option<AdamState>,
    acc: GradAccumulator,
    microbatches_seen: u64,
    u_pull: u64,
    beta2: f64,
    eps: f64,
}

impl WorkerState {
    /// `beta2`/`eps` configure the local optimizer; lr and β1 come from the
    /// schedule.
    pub fn new(id: usize, template: &ParamVector, beta2: f64, eps: f64) -> Self {
        Self {
            id,
            local_params: template.clone(),
            local_adam: None,
            acc: GradAccumulator::new(template),
            microbatches_seen: 0,
            u_pull: 0,
            beta2,
            eps,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn local_params(&self) -> &ParamVector {
        &self.local_params
    }

    pub fn local_adam(&self) -> Option<&AdamState> {
        self.local_adam.as_ref()
    }

    pub fn microbatches_seen(&self) -> u64 {
        self.microbatches_seen
    }

    pub fn accumulator(&self) -> &GradAccumulator {
        &self.acc
    }

    /// Replaces the local replica with the current global model. Any local
    /// divergence is lost here.
    pub fn begin_group(&mut self, store: &impl ParamServer) {
        let (snapshot, u_pull) = store.pull();
        self.local_params = snapshot;
        self.u_pull = u_pull;
        self.acc.reset();
    }

    /// Runs the τ micro-batches on the replica pulled by `begin_group` and
    /// pushes the accumulated gradient.
    pub fn finish_group(
        &mut self,
        spec: &ModelSpec,
        batches: &[Batch],
        store: &mut impl ParamServer,
        schedule: &TrainSchedule,
        sim_time: f64,
    ) -> Result<GroupReport> {
        let tau = batches.len();
        if tau == 0 {
            return Err(Error::Empty("a group needs at least one micro-batch"));
        }
        let mut local_steps = 0;
        for (j, batch) in batches.iter().enumerate() {
            let lg = backward(spec, &self.local_params, batch)?;
            self.acc.accumulate(&lg.grad, lg.tokens)?;
            self.acc.add_loss(lg.loss);

            if !schedule.local_opt_enabled(self.microbatches_seen) {
                self.local_adam = None;
            } else if j + 1 < tau {
                self.local_step(&lg.grad, lg.tokens, store, schedule, tau)?;
                local_steps += 1;
            }
            self.microbatches_seen += 1;
        }

        let ctx = PushContext { worker: self.id, sim_time, schedule, tau };
        let u_apply = store.push_group(&self.acc, self.u_pull, &ctx)? - 1;
        Ok(GroupReport {
            worker: self.id,
            loss: self.acc.loss(),
            tokens: self.acc.tokens(),
            u_pull: self.u_pull,
            u_apply,
            staleness: u_apply - self.u_pull,
            local_steps,
            sim_time,
        })
    }

    fn local_step(
        &mut self,
        grad: &ParamVector,
        tokens: usize,
        store: &mut impl ParamServer,
        schedule: &TrainSchedule,
        tau: usize,
    ) -> Result<()> {
        let t = store.updates() + 1;
        let hp = HyperParams {
            lr: local_lr(schedule.global_lr_at(t, tau), tau),
            beta1: schedule.beta1_at(t),
            beta2: self.beta2,
            eps: self.eps,
        };
        let g: Vec<f64> = match schedule.lr_mode {
            LrMode::MeanTokens => grad.as_slice().iter().map(|v| v / tokens as f64).collect(),
            LrMode::Sum => grad.as_slice().to_vec(),
        };
        let n = self.local_params.len();
        let delta = self.local_adam.get_or_insert_with(|| AdamState::new(n)).delta(&g, &hp)?;
        for (p, d) in self.local_params.as_mut_slice().iter_mut().zip(&delta) {
            *p += d;
        }
        self.local_params.check_finite()?;
        let own = store.shard_range(self.id);
        store.local_shard_write(self.id, &delta[own])
    }

    /// `begin_group` immediately followed by `finish_group`.
    pub fn run_group(
        &mut self,
        spec: &ModelSpec,
        batches: &[Batch],
        store: &mut impl ParamServer,
        schedule: &TrainSchedule,
        sim_time: f64,
    ) -> Result<GroupReport> {
        self.begin_group(store);
        self.finish_group(spec, batches, store, schedule, sim_time)
    }
}
