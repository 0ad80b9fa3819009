mod common;

use std::ops::Range;

use common::{rel_err, small_corpus, small_gru, RefAdam};
use delaylab_core::models::{backward, init_params, Batch};
use delaylab_core::numerics::ParamVector;
use delaylab_core::pserver::{GlobalStore, GradAccumulator, ParamServer, PushContext};
use delaylab_core::schedules::{local_lr, LrMode, TrainSchedule};
use delaylab_core::worker::WorkerState;

/// Forwards to a `GlobalStore` and counts Hogwild writes.
struct Counting {
    inner: GlobalStore,
    local_writes: usize,
    written: Vec<(usize, usize)>,
}

impl ParamServer for Counting {
    fn shard_range(&self, worker: usize) -> Range<usize> {
        self.inner.shard_range(worker)
    }
    fn updates(&self) -> u64 {
        self.inner.updates()
    }
    fn pull(&self) -> (ParamVector, u64) {
        self.inner.pull()
    }
    fn push_group(&mut self, acc: &GradAccumulator, u_pull: u64, ctx: &PushContext<'_>) -> delaylab_core::Result<u64> {
        self.inner.push_group(acc, u_pull, ctx)
    }
    fn local_shard_write(&mut self, worker: usize, delta: &[f64]) -> delaylab_core::Result<()> {
        self.local_writes += 1;
        self.written.push((worker, delta.len()));
        self.inner.local_shard_write(worker, delta)
    }
}

fn batches(n: usize) -> Vec<Batch> {
    let (corpus, packed) = small_corpus(3);
    packed.batches[..n].iter().map(|b| corpus.batch(b).unwrap()).collect()
}

fn schedule(window: u64) -> TrainSchedule {
    TrainSchedule { base_lr: 0.01, warmup_steps: 0, local_opt_window: window, ..TrainSchedule::default() }
}

fn store(init: &ParamVector, n: usize) -> Counting {
    Counting { inner: GlobalStore::new(init.clone(), n, 0.999, 1e-8).unwrap(), local_writes: 0, written: Vec::new() }
}

#[test]
fn tau_one_never_steps_locally() {
    let spec = small_gru();
    let init = init_params(&spec, 1).unwrap();
    let mut s = store(&init, 2);
    let mut w = WorkerState::new(1, &init, 0.999, 1e-8);
    let sched = schedule(1000);
    for b in batches(5) {
        let r = w.run_group(&spec, &[b], &mut s, &sched, 0.0).unwrap();
        assert_eq!(r.local_steps, 0);
    }
    assert_eq!(s.local_writes, 0);
    assert!(w.local_adam().is_none());
}

#[test]
fn disabled_window_pushes_plain_sum() {
    let spec = small_gru();
    let init = init_params(&spec, 2).unwrap();
    let bs = batches(2);
    let mut s = store(&init, 3);
    let mut w = WorkerState::new(0, &init, 0.999, 1e-8);
    w.run_group(&spec, &bs, &mut s, &schedule(0), 0.0).unwrap();
    let g1 = backward(&spec, &init, &bs[0]).unwrap();
    let g2 = backward(&spec, &init, &bs[1]).unwrap();
    let sum = ParamVector::axpy(1.0, &g1.grad, &g2.grad).unwrap();
    assert_eq!(w.accumulator().sum().as_slice(), sum.as_slice());
    assert_eq!(w.accumulator().tokens(), g1.tokens + g2.tokens);
    assert_eq!(s.local_writes, 0);
}

#[test]
fn counters_advance_per_group() {
    let spec = small_gru();
    let init = init_params(&spec, 3).unwrap();
    let bs = batches(8);
    let mut s = store(&init, 2);
    let mut w = WorkerState::new(1, &init, 0.999, 1e-8);
    let sched = schedule(2);
    for (g, chunk) in bs.chunks(4).enumerate() {
        let r = w.run_group(&spec, chunk, &mut s, &sched, 0.0).unwrap();
        assert_eq!(w.microbatches_seen(), 4 * (g as u64 + 1));
        assert_eq!(s.updates(), g as u64 + 1);
        assert_eq!(r.tokens, chunk.iter().map(Batch::token_count).sum::<usize>());
    }
    // Window of two micro-batches: two local steps in the first group, none after.
    assert_eq!(s.local_writes, 2);
}

#[test]
fn local_adam_is_dropped_when_window_closes() {
    let spec = small_gru();
    let init = init_params(&spec, 4).unwrap();
    let bs = batches(4);
    let mut s = store(&init, 1);
    let mut w = WorkerState::new(0, &init, 0.999, 1e-8);
    let sched = schedule(2);
    let r = w.run_group(&spec, &bs[..2], &mut s, &sched, 0.0).unwrap();
    assert_eq!(r.local_steps, 1);
    assert_eq!(w.local_adam().map(|a| a.t()), Some(1));
    let r = w.run_group(&spec, &bs[2..], &mut s, &sched, 0.0).unwrap();
    assert_eq!(r.local_steps, 0);
    assert!(w.local_adam().is_none());
}

#[test]
fn local_step_matches_sequential_replay() {
    let spec = small_gru();
    let init = init_params(&spec, 5).unwrap();
    let bs = batches(2);
    let sched = TrainSchedule { warmup_steps: 10, ..schedule(100) };
    let (b1, b2, eps) = (sched.beta1_at(1), 0.999, 1e-8);

    let mut s = store(&init, 1);
    let mut w = WorkerState::new(0, &init, b2, eps);
    w.run_group(&spec, &bs, &mut s, &sched, 0.0).unwrap();

    // Replay: one local step on the first gradient, moving both the replica
    // and the (single) global shard, then one global step on the mean of both.
    let glr = sched.global_lr_at(1, 2);
    let g1 = backward(&spec, &init, &bs[0]).unwrap();
    let mut local = init.as_slice().to_vec();
    let n1: Vec<f64> = g1.grad.as_slice().iter().map(|g| g / g1.tokens as f64).collect();
    let delta = RefAdam::new(local.len()).step(&mut local, &n1, local_lr(glr, 2), b1, b2, eps);
    let mut global: Vec<f64> = init.as_slice().iter().zip(&delta).map(|(p, d)| p + d).collect();
    let replica = ParamVector::from_values(init.layout(), local).unwrap();
    let g2 = backward(&spec, &replica, &bs[1]).unwrap();
    let tokens = (g1.tokens + g2.tokens) as f64;
    let mean: Vec<f64> = g1.grad.as_slice().iter().zip(g2.grad.as_slice()).map(|(a, b)| (a + b) / tokens).collect();
    RefAdam::new(global.len()).step(&mut global, &mean, glr, b1, b2, eps);

    assert!(rel_err(s.inner.params().as_slice(), &global) <= 1e-12);
    assert_eq!(s.local_writes, 1);
    assert_eq!(sched.lr_mode, LrMode::MeanTokens);
}

#[test]
fn own_shard_only_is_written() {
    let spec = small_gru();
    let init = init_params(&spec, 6).unwrap();
    let bs = batches(3);
    let mut s = store(&init, 4);
    let mut w = WorkerState::new(2, &init, 0.999, 1e-8);
    w.run_group(&spec, &bs, &mut s, &schedule(10), 0.0).unwrap();
    let own = s.shard_range(2).len();
    assert_eq!(s.written, [(2, own), (2, own)]);
}
