//! Real threads against a shared store.
//!
//! Parameters live in `AtomicU64` cells holding `f64` bits, so a local
//! shard write is an element-atomic add that never blocks. Global pushes
//! are serialized by one mutex that also owns the update counter and the
//! push log; each shard's Adam state sits behind its own mutex. A pull may
//! observe a push or a Hogwild write half applied.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use delaylab_core::harness::{ExperimentConfig, ExperimentData, MetricsTracker, RunOutput};
use delaylab_core::numerics::{ParamLayout, ParamVector};
use delaylab_core::optim::{AdamState, HyperParams};
use delaylab_core::pserver::{check_push, GradAccumulator, ParamServer, PushContext, PushRecord, ShardTable};
use delaylab_core::sim::BatchFeeder;
use delaylab_core::worker::WorkerState;

use crate::error::{LabError, LabResult};

#[derive(Debug)]
struct Counter {
    u: u64,
    log: Vec<PushRecord>,
}

#[derive(Debug)]
pub struct ConcurrentStore {
    layout: Arc<ParamLayout>,
    cells: Vec<AtomicU64>,
    shards: ShardTable,
    adam: Vec<Mutex<AdamState>>,
    counter: Mutex<Counter>,
    u: AtomicU64,
    beta2: f64,
    eps: f64,
    start: Instant,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panicking worker already aborts the run; the data is still usable.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn atomic_add(cell: &AtomicU64, d: f64) {
    let _ = cell.fetch_update(Ordering::AcqRel, Ordering::Acquire, |bits| Some((f64::from_bits(bits) + d).to_bits()));
}

impl ConcurrentStore {
    pub fn new(params: &ParamVector, n_workers: usize, beta2: f64, eps: f64) -> LabResult<Self> {
        let shards = ShardTable::new(params.len(), n_workers)?;
        Ok(Self {
            layout: params.layout().clone(),
            cells: params.as_slice().iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            adam: shards.ranges().map(|r| Mutex::new(AdamState::new(r.len()))).collect(),
            shards,
            counter: Mutex::new(Counter { u: 0, log: Vec::new() }),
            u: AtomicU64::new(0),
            beta2,
            eps,
            start: Instant::now(),
        })
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn updates(&self) -> u64 {
        self.u.load(Ordering::Acquire)
    }

    pub fn snapshot(&self) -> ParamVector {
        let values = self.cells.iter().map(|c| f64::from_bits(c.load(Ordering::Acquire))).collect();
        ParamVector::from_values(&self.layout, values).expect("cells match layout")
    }

    pub fn pull(&self) -> (ParamVector, u64) {
        let u = self.updates();
        (self.snapshot(), u)
    }

    pub fn push_group(&self, acc: &GradAccumulator, u_pull: u64, ctx: &PushContext<'_>) -> LabResult<u64> {
        let mut counter = lock(&self.counter);
        let current = self.snapshot();
        check_push(acc, &current, u_pull, counter.u, ctx.tau)?;
        let grad = acc.effective_gradient(ctx.schedule.lr_mode);
        let t = counter.u + 1;
        let hp = HyperParams {
            lr: ctx.schedule.global_lr_at(t, ctx.tau),
            beta1: ctx.schedule.beta1_at(t),
            beta2: self.beta2,
            eps: self.eps,
        };

        // Compute every shard's step first so a non-finite one aborts the push.
        let mut guards: Vec<_> = self.adam.iter().map(lock).collect();
        let mut staged = Vec::with_capacity(guards.len());
        for (range, state) in self.shards.ranges().zip(guards.iter()) {
            let mut trial = (*state).clone();
            let delta = trial.delta(&grad.as_slice()[range.clone()], &hp)?;
            let moved: Vec<f64> = current.as_slice()[range].iter().zip(&delta).map(|(p, d)| p + d).collect();
            if moved.iter().any(|v| !v.is_finite()) {
                return Err(delaylab_core::Error::NonFinite { segment: "global".to_string() }.into());
            }
            staged.push((trial, delta));
        }
        for ((range, guard), (trial, delta)) in self.shards.ranges().zip(guards.iter_mut()).zip(staged) {
            **guard = trial;
            for (cell, d) in self.cells[range].iter().zip(delta) {
                atomic_add(cell, d);
            }
        }

        let u_apply = counter.u;
        counter.u += 1;
        counter.log.push(PushRecord {
            push_index: u_apply,
            worker: ctx.worker,
            sim_time: self.elapsed(),
            u_pull,
            u_apply,
            staleness: u_apply - u_pull,
            tokens: acc.tokens(),
        });
        self.u.store(counter.u, Ordering::Release);
        Ok(counter.u)
    }

    /// Lock-free add into `worker`'s shard.
    pub fn local_shard_write(&self, worker: usize, delta: &[f64]) -> LabResult<()> {
        if worker >= self.shards.n_shards() {
            return Err(delaylab_core::Error::invalid("no such worker shard").into());
        }
        let range = self.shards.range(worker);
        if delta.len() != range.len() {
            return Err(delaylab_core::Error::LayoutMismatch { expected: range.len(), found: delta.len() }.into());
        }
        for (cell, &d) in self.cells[range].iter().zip(delta) {
            atomic_add(cell, d);
        }
        Ok(())
    }

    pub fn push_log(&self) -> Vec<PushRecord> {
        lock(&self.counter).log.clone()
    }
}

/// Per-thread view of a shared store.
#[derive(Debug, Clone, Copy)]
pub struct StoreHandle<'a>(pub &'a ConcurrentStore);

fn to_core(e: LabError) -> delaylab_core::Error {
    match e {
        LabError::Core(e) => e,
        other => delaylab_core::Error::invalid(other.to_string()),
    }
}

impl ParamServer for StoreHandle<'_> {
    fn shard_range(&self, worker: usize) -> Range<usize> {
        self.0.shards.range(worker)
    }

    fn updates(&self) -> u64 {
        self.0.updates()
    }

    fn pull(&self) -> (ParamVector, u64) {
        self.0.pull()
    }

    fn push_group(&mut self, acc: &GradAccumulator, u_pull: u64, ctx: &PushContext<'_>) -> delaylab_core::Result<u64> {
        self.0.push_group(acc, u_pull, ctx).map_err(to_core)
    }

    fn local_shard_write(&mut self, worker: usize, delta: &[f64]) -> delaylab_core::Result<()> {
        self.0.local_shard_write(worker, delta).map_err(to_core)
    }
}

struct Shared {
    tracker: MetricsTracker,
    last_eval: u64,
}

/// Runs `cfg` with one OS thread per worker. `sim_time` and `wall_time` are
/// both elapsed wall-clock seconds. Evaluations are performed by the worker
/// whose push lands on an evaluation boundary.
pub fn run_concurrent(cfg: &ExperimentConfig) -> LabResult<RunOutput> {
    crate::config::check(cfg)?;
    let data = ExperimentData::prepare(cfg)?;
    let schedule = cfg.schedule();
    let setup = data.sim_setup(cfg, &schedule);
    let store = ConcurrentStore::new(&data.init, setup.n_workers, setup.beta2, setup.eps)?;
    let shared = Mutex::new(Shared { tracker: MetricsTracker::new(cfg, &data), last_eval: 0 });
    lock(&shared).tracker.evaluate_at(0, 0.0, 0.0, &data.init, &data.valid_batches)?;
    let stop = AtomicBool::new(false);

    let worker_loop = |w: usize| -> LabResult<()> {
        let mut worker = WorkerState::new(w, &data.init, setup.beta2, setup.eps);
        let mut feeder = BatchFeeder::new(setup.corpus, setup.packed, setup.data_seed, setup.n_workers)?;
        let mut handle = StoreHandle(&store);
        for g in 0u64.. {
            if stop.load(Ordering::Acquire) {
                break;
            }
            let batches = feeder.take(w, g * setup.tau as u64, setup.tau)?;
            let report = worker.run_group(setup.spec, &batches, &mut handle, &schedule, store.elapsed())?;
            let u = report.u_apply + 1;

            let mut sh = lock(&shared);
            sh.tracker.observe(report.loss, report.tokens, report.staleness);
            if sh.tracker.due(u) && u > sh.last_eval {
                let now = store.elapsed();
                sh.tracker.evaluate_at(u, now, now, &store.snapshot(), &data.valid_batches)?;
                sh.last_eval = u;
            }
            if sh.tracker.finished(u) {
                stop.store(true, Ordering::Release);
            }
        }
        Ok(())
    };

    let results: Vec<LabResult<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..setup.n_workers)
            .map(|w| {
                let f = &worker_loop;
                let stop = &stop;
                scope.spawn(move || {
                    let r = f(w);
                    if r.is_err() {
                        stop.store(true, Ordering::Release);
                    }
                    r
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
    });
    results.into_iter().collect::<LabResult<Vec<()>>>()?;

    let sh = shared.into_inner().unwrap_or_else(|e| e.into_inner());
    let (updates, elapsed) = (store.updates(), store.elapsed());
    let summary = sh.tracker.summary(&cfg.experiment.name, updates, elapsed, elapsed, data.entropy_floor);
    Ok(RunOutput { records: sh.tracker.into_records(), summary, params: store.snapshot(), pushes: store.push_log() })
}
