//! Deterministic discrete-event execution of asynchronous (and lockstep
//! synchronous) training in simulated time.
//!
//! Each worker pulls when its group starts and schedules a `group_done`
//! event `group_duration` seconds later. At that instant the whole group
//! (micro-batch gradients, local optimizer steps, push) runs atomically.
//! Events are ordered by time, then worker id.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};
use core::fmt::Write as _;

use rand::Rng;

use crate::datagen::{epoch_order, Corpus, PackedBatches};
use crate::error::{Error, Result};
use crate::models::{backward, Batch, ModelSpec};
use crate::numerics::ParamVector;
use crate::pserver::{GlobalStore, GradAccumulator, ParamServer, PushContext, PushRecord};
use crate::rng;
use crate::schedules::TrainSchedule;
use crate::worker::{GroupReport, WorkerState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub tokens_per_sec: f64,
    /// Per-group push + pull cost in seconds.
    pub push_overhead_sec: f64,
    /// Jitter amplitude `a` in `[0, 1]`: compute time is multiplied by
    /// `2^(a·u)` with `u` uniform in `[-1, 1]`. Zero disables jitter.
    pub jitter: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { tokens_per_sec: 10_000.0, push_overhead_sec: 0.05, jitter: 0.0 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.tokens_per_sec > 0.0 && self.tokens_per_sec.is_finite()) {
            return Err(Error::invalid("tokens_per_sec must be positive"));
        }
        if !(self.push_overhead_sec >= 0.0 && self.push_overhead_sec.is_finite()) {
            return Err(Error::invalid("push_overhead_sec must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(Error::invalid("jitter must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Multiplicative compute-time noise for one group; within `[0.5, 2]`.
    pub fn jitter_factor(&self, seed: u64, worker: usize, step: u64) -> f64 {
        if self.jitter == 0.0 {
            return 1.0;
        }
        let u: f64 = rng::stream(seed, &[0x5177, worker as u64, step]).gen_range(-1.0..=1.0);
        libm::exp2(self.jitter * u)
    }
}

/// Simulated seconds for a group of `group_tokens` tokens.
pub fn group_duration(cm: &CostModel, group_tokens: usize, seed: u64, worker: usize, step: u64) -> f64 {
    group_tokens as f64 / cm.tokens_per_sec * cm.jitter_factor(seed, worker, step) + cm.push_overhead_sec
}

/// Deals one endless batch stream (a fresh seeded permutation per epoch)
/// across workers round-robin: worker `w`'s `k`-th micro-batch is global
/// position `w + k·N`.
#[derive(Debug, Clone)]
pub struct BatchFeeder<'a> {
    corpus: &'a Corpus,
    packed: &'a PackedBatches,
    seed: u64,
    n_workers: usize,
    orders: Vec<(u64, Vec<usize>)>,
}

impl<'a> BatchFeeder<'a> {
    pub fn new(corpus: &'a Corpus, packed: &'a PackedBatches, seed: u64, n_workers: usize) -> Result<Self> {
        if packed.is_empty() {
            return Err(Error::Empty("no packed batches"));
        }
        if n_workers == 0 {
            return Err(Error::invalid("need at least one worker"));
        }
        Ok(Self { corpus, packed, seed, n_workers, orders: Vec::new() })
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    /// Batch at position `m` of the global stream.
    pub fn global(&mut self, m: u64) -> Result<Batch> {
        let n = self.packed.len() as u64;
        let (epoch, pos) = (m / n, (m % n) as usize);
        let idx = match self.orders.iter().position(|(e, _)| *e == epoch) {
            Some(i) => self.orders[i].1[pos],
            None => {
                // Workers drift apart by a few epochs at most; keep a small window.
                if self.orders.len() >= 8 {
                    self.orders.remove(0);
                }
                let order = epoch_order(self.packed.len(), rng::derive_seed(self.seed, &[epoch]));
                let idx = order[pos];
                self.orders.push((epoch, order));
                idx
            }
        };
        self.corpus.batch(&self.packed.batches[idx])
    }

    /// Worker `w`'s micro-batches `k_start .. k_start + count`.
    pub fn take(&mut self, worker: usize, k_start: u64, count: usize) -> Result<Vec<Batch>> {
        (0..count as u64).map(|j| self.global(worker as u64 + (k_start + j) * self.n_workers as u64)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    worker: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.worker.cmp(&other.worker))
    }
}

/// A training loop advanced one global update at a time.
pub trait Trainer {
    fn step(&mut self) -> Result<GroupReport>;
    fn store(&self) -> &GlobalStore;
    /// Current simulated time.
    fn clock(&self) -> f64;
}

/// Everything a simulation borrows from the experiment setup.
#[derive(Debug, Clone, Copy)]
pub struct SimSetup<'a> {
    pub spec: &'a ModelSpec,
    pub schedule: &'a TrainSchedule,
    pub cost: CostModel,
    pub corpus: &'a Corpus,
    pub packed: &'a PackedBatches,
    /// Seeds the epoch permutations.
    pub data_seed: u64,
    /// Seeds the jitter.
    pub sim_seed: u64,
    pub n_workers: usize,
    pub tau: usize,
    pub beta2: f64,
    pub eps: f64,
}

impl SimSetup<'_> {
    fn check(&self) -> Result<()> {
        self.cost.validate()?;
        self.schedule.validate()?;
        if self.n_workers == 0 || self.tau == 0 {
            return Err(Error::invalid("workers and tau must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct AsyncSim<'a> {
    setup: SimSetup<'a>,
    feeder: BatchFeeder<'a>,
    store: GlobalStore,
    workers: Vec<WorkerState>,
    in_flight: Vec<Vec<Batch>>,
    groups_started: Vec<u64>,
    queue: BinaryHeap<Reverse<Event>>,
    clock: f64,
}

impl<'a> AsyncSim<'a> {
    pub fn new(setup: SimSetup<'a>, init: ParamVector) -> Result<Self> {
        setup.check()?;
        let feeder = BatchFeeder::new(setup.corpus, setup.packed, setup.data_seed, setup.n_workers)?;
        let workers = (0..setup.n_workers).map(|w| WorkerState::new(w, &init, setup.beta2, setup.eps)).collect();
        let store = GlobalStore::new(init, setup.n_workers, setup.beta2, setup.eps)?;
        let mut sim = Self {
            setup,
            feeder,
            store,
            workers,
            in_flight: (0..setup.n_workers).map(|_| Vec::new()).collect(),
            groups_started: alloc::vec![0; setup.n_workers],
            queue: BinaryHeap::new(),
            clock: 0.0,
        };
        for w in 0..setup.n_workers {
            sim.start_group(w)?;
        }
        Ok(sim)
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    fn start_group(&mut self, w: usize) -> Result<()> {
        let g = self.groups_started[w];
        let batches = self.feeder.take(w, g * self.setup.tau as u64, self.setup.tau)?;
        let tokens = batches.iter().map(Batch::token_count).sum();
        let done = self.clock + group_duration(&self.setup.cost, tokens, self.setup.sim_seed, w, g);
        self.workers[w].begin_group(&self.store);
        self.in_flight[w] = batches;
        self.groups_started[w] += 1;
        self.queue.push(Reverse(Event { time: done, worker: w }));
        Ok(())
    }
}

impl Trainer for AsyncSim<'_> {
    fn step(&mut self) -> Result<GroupReport> {
        let Reverse(ev) = self.queue.pop().ok_or(Error::Empty("event queue"))?;
        self.clock = ev.time;
        let batches = core::mem::take(&mut self.in_flight[ev.worker]);
        let report =
            self.workers[ev.worker].finish_group(self.setup.spec, &batches, &mut self.store, self.setup.schedule, ev.time)?;
        self.start_group(ev.worker)?;
        Ok(report)
    }

    fn store(&self) -> &GlobalStore {
        &self.store
    }

    fn clock(&self) -> f64 {
        self.clock
    }
}

/// Lockstep data parallelism: every step all workers compute τ micro-batches
/// at the same parameters, the gradients are summed, and one global update
/// is applied. The step lasts as long as the slowest worker. Local
/// optimizers do not apply.
#[derive(Debug)]
pub struct SyncSim<'a> {
    setup: SimSetup<'a>,
    feeder: BatchFeeder<'a>,
    store: GlobalStore,
    acc: GradAccumulator,
    steps: u64,
    clock: f64,
}

impl<'a> SyncSim<'a> {
    pub fn new(setup: SimSetup<'a>, init: ParamVector) -> Result<Self> {
        setup.check()?;
        let feeder = BatchFeeder::new(setup.corpus, setup.packed, setup.data_seed, setup.n_workers)?;
        let acc = GradAccumulator::new(&init);
        let store = GlobalStore::new(init, setup.n_workers, setup.beta2, setup.eps)?;
        Ok(Self { setup, feeder, store, acc, steps: 0, clock: 0.0 })
    }
}

impl Trainer for SyncSim<'_> {
    fn step(&mut self) -> Result<GroupReport> {
        let (n, tau) = (self.setup.n_workers, self.setup.tau);
        let (params, u_pull) = self.store.pull();
        self.acc.reset();
        let mut worker_tokens = alloc::vec![0usize; n];
        // Micro-batch order matches a single worker consuming the same
        // stream, so the summed gradient is accumulated in stream order.
        for j in 0..tau {
            for (w, wt) in worker_tokens.iter_mut().enumerate() {
                let batch = self.feeder.take(w, self.steps * tau as u64 + j as u64, 1)?.remove(0);
                let lg = backward(self.setup.spec, &params, &batch)?;
                self.acc.accumulate(&lg.grad, lg.tokens)?;
                self.acc.add_loss(lg.loss);
                *wt += lg.tokens;
            }
        }
        let duration = worker_tokens
            .iter()
            .enumerate()
            .map(|(w, &t)| group_duration(&self.setup.cost, t, self.setup.sim_seed, w, self.steps))
            .fold(0.0, f64::max);
        self.clock += duration;
        self.steps += 1;

        let ctx = PushContext { worker: 0, sim_time: self.clock, schedule: self.setup.schedule, tau: n * tau };
        self.store.push_group(&self.acc, u_pull, &ctx)?;
        Ok(GroupReport {
            worker: 0,
            loss: self.acc.loss(),
            tokens: self.acc.tokens(),
            u_pull,
            u_apply: u_pull,
            staleness: 0,
            local_steps: 0,
            sim_time: self.clock,
        })
    }

    fn store(&self) -> &GlobalStore {
        &self.store
    }

    fn clock(&self) -> f64 {
        self.clock
    }
}

/// Ordered pushes of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<PushRecord>,
}

impl EventLog {
    pub const CSV_HEADER: &'static str = "push_index,worker,sim_time,u_pull,u_apply,staleness,tokens";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.push_index, r.worker, r.sim_time, r.u_pull, r.u_apply, r.staleness, r.tokens
            );
        }
        out
    }
}

/// Runs `pushes` global updates and returns the push log.
pub fn run_pushes(trainer: &mut dyn Trainer, pushes: u64) -> Result<EventLog> {
    for _ in 0..pushes {
        trainer.step()?;
    }
    Ok(EventLog { records: trainer.store().push_log().to_vec() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StalenessStats {
    pub mean: f64,
    pub max: u64,
    /// `histogram[s]` counts pushes with staleness `s`.
    pub histogram: Vec<u64>,
}

pub fn staleness_stats(records: &[PushRecord]) -> Result<StalenessStats> {
    if records.is_empty() {
        return Err(Error::Empty("push log"));
    }
    let max = records.iter().map(|r| r.staleness).max().unwrap_or(0);
    let mut histogram = alloc::vec![0u64; max as usize + 1];
    let mut total = 0u64;
    for r in records {
        histogram[r.staleness as usize] += 1;
        total += r.staleness;
    }
    Ok(StalenessStats { mean: total as f64 / records.len() as f64, max, histogram })
}

/// Tokens pushed within `[0, horizon]` simulated seconds, per second.
pub fn wps(records: &[PushRecord], horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let tokens: usize = records.iter().filter(|r| r.sim_time <= horizon).map(|r| r.tokens).sum();
    Ok(tokens as f64 / horizon)
}
