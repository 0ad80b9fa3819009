//! Experiment wiring: configuration, validation cross-entropy, stall-based
//! early stopping and the deterministic training loop.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::datagen::{pack_batches, Corpus, CorpusSpec, MarkovSource, PackedBatches, Pattern, Split};
use crate::error::{Error, Result};
use crate::models::{forward_loss, init_params, Batch, ModelSpec};
use crate::numerics::ParamVector;
use crate::pserver::{ParamServer, PushRecord};
use crate::rng;
use crate::schedules::{Cooldown, LrMode, TrainSchedule};
use crate::sim::{staleness_stats, AsyncSim, CostModel, SimSetup, SyncSim, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum TrainMode {
    #[default]
    Async,
    Sync,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum SimMode {
    #[default]
    Deterministic,
    /// Real threads against a lock-free store; provided by the std crate.
    Concurrent,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct ExperimentSection {
    pub name: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { name: "experiment".to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct DataSection {
    pub seed: u64,
    pub n_sentences: usize,
    pub vocab: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub pattern: Pattern,
    pub valid_sentences: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { seed: 1, n_sentences: 2000, vocab: 16, len_min: 5, len_max: 20, pattern: Pattern::Default, valid_sentences: 300 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct BatchSection {
    pub word_budget: usize,
    /// Sentences sorted by length within windows of this size before packing.
    pub sort_window: usize,
}

impl Default for BatchSection {
    fn default() -> Self {
        Self { word_budget: 500, sort_window: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct TrainSection {
    pub workers: usize,
    pub tau: usize,
    pub mode: TrainMode,
    pub lr_mode: LrMode,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { workers: 4, tau: 1, mode: TrainMode::Async, lr_mode: LrMode::MeanTokens }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct OptimizerSection {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self { base_lr: 0.002, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct ScheduleSection {
    pub warmup_steps: u64,
    pub cooldown: Cooldown,
    pub beta1_after: f64,
    pub beta1_switch_step: u64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { warmup_steps: 0, cooldown: Cooldown::None, beta1_after: 0.9, beta1_switch_step: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct LocalOptSection {
    /// Micro-batches per worker with local optimizers on; 0 disables them.
    pub window: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct SimSection {
    pub mode: SimMode,
    pub tokens_per_sec: f64,
    pub push_overhead_sec: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        let cm = CostModel::default();
        Self {
            mode: SimMode::Deterministic,
            tokens_per_sec: cm.tokens_per_sec,
            push_overhead_sec: cm.push_overhead_sec,
            jitter: cm.jitter,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct StopSection {
    pub patience: usize,
    pub eval_every_updates: u64,
    /// An evaluation must beat the best CE by more than this to count.
    pub min_delta: f64,
    /// Hard cap on global updates.
    pub max_updates: u64,
    /// Target CE as a multiple of the source's entropy floor.
    pub target_ce_ratio: f64,
}

impl Default for StopSection {
    fn default() -> Self {
        Self { patience: 5, eval_every_updates: 50, min_delta: 0.0, max_updates: 5000, target_ce_ratio: 1.10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    pub model: ModelSpec,
    pub batch: BatchSection,
    pub train: TrainSection,
    pub optimizer: OptimizerSection,
    pub schedule: ScheduleSection,
    pub local_opt: LocalOptSection,
    pub sim: SimSection,
    pub stop: StopSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentSection::default(),
            data: DataSection::default(),
            model: ModelSpec::DEFAULT_GRU,
            batch: BatchSection::default(),
            train: TrainSection::default(),
            optimizer: OptimizerSection::default(),
            schedule: ScheduleSection::default(),
            local_opt: LocalOptSection::default(),
            sim: SimSection::default(),
            stop: StopSection::default(),
        }
    }
}

/// One validation problem, addressed by its config key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl core::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl ExperimentConfig {
    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            base_lr: self.optimizer.base_lr,
            warmup_steps: self.schedule.warmup_steps,
            cooldown: self.schedule.cooldown,
            beta1_before: self.optimizer.beta1,
            beta1_after: self.schedule.beta1_after,
            beta1_switch_step: self.schedule.beta1_switch_step,
            local_opt_window: self.local_opt.window,
            lr_mode: self.train.lr_mode,
        }
    }

    pub fn cost_model(&self) -> CostModel {
        CostModel {
            tokens_per_sec: self.sim.tokens_per_sec,
            push_overhead_sec: self.sim.push_overhead_sec,
            jitter: self.sim.jitter,
        }
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            n_sentences: self.data.n_sentences,
            vocab: self.data.vocab,
            len_min: self.data.len_min,
            len_max: self.data.len_max,
            pattern: self.data.pattern,
        }
    }

    /// Every problem found, each tagged with the offending key path.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut check = |ok: bool, path: &str, message: &str| {
            if !ok {
                issues.push(ConfigIssue { path: path.to_string(), message: message.to_string() });
            }
        };
        let d = &self.data;
        check(d.n_sentences >= 1, "data.n_sentences", "must be at least 1");
        check(d.valid_sentences >= 1, "data.valid_sentences", "must be at least 1");
        check(d.vocab >= 2, "data.vocab", "must be at least 2");
        check(d.len_min >= 1, "data.len_min", "must be at least 1");
        check(d.len_min <= d.len_max, "data.len_max", "must be at least data.len_min");

        match self.model {
            ModelSpec::GruLm { vocab, .. } => {
                check(vocab == d.vocab, "model.vocab", "must equal data.vocab");
                check(self.model.validate().is_ok(), "model", "dimensions must be at least 1");
            }
            _ => check(false, "model.kind", "experiments train gru_lm on generated text"),
        }

        check(self.batch.word_budget >= 1, "batch.word_budget", "must be at least 1");
        check(self.batch.sort_window >= 1, "batch.sort_window", "must be at least 1");
        check(self.train.workers >= 1, "train.workers", "must be at least 1");
        check(self.train.tau >= 1, "train.tau", "must be at least 1");

        let o = &self.optimizer;
        check(o.base_lr > 0.0 && o.base_lr.is_finite(), "optimizer.base_lr", "must be positive");
        check((0.0..1.0).contains(&o.beta1), "optimizer.beta1", "must lie in [0, 1)");
        check((0.0..1.0).contains(&o.beta2), "optimizer.beta2", "must lie in [0, 1)");
        check(o.eps > 0.0 && o.eps.is_finite(), "optimizer.eps", "must be positive");
        check((0.0..1.0).contains(&self.schedule.beta1_after), "schedule.beta1_after", "must lie in [0, 1)");

        let s = &self.sim;
        check(s.tokens_per_sec > 0.0 && s.tokens_per_sec.is_finite(), "sim.tokens_per_sec", "must be positive");
        check(
            s.push_overhead_sec >= 0.0 && s.push_overhead_sec.is_finite(),
            "sim.push_overhead_sec",
            "must be non-negative",
        );
        check((0.0..=1.0).contains(&s.jitter), "sim.jitter", "must lie in [0, 1]");

        let st = &self.stop;
        check(st.patience >= 1, "stop.patience", "must be at least 1");
        check(st.eval_every_updates >= 1, "stop.eval_every_updates", "must be at least 1");
        check(st.min_delta >= 0.0, "stop.min_delta", "must be non-negative");
        check(st.max_updates >= 1, "stop.max_updates", "must be at least 1");
        check(st.target_ce_ratio > 0.0, "stop.target_ce_ratio", "must be positive");
        issues
    }

    pub fn validated(&self) -> Result<()> {
        let issues = self.validate();
        match issues.first() {
            None => Ok(()),
            Some(_) => Err(Error::invalid(issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))),
        }
    }
}

/// Summed loss over `batches` divided by their token count.
pub fn evaluate(spec: &ModelSpec, params: &ParamVector, batches: &[Batch]) -> Result<f64> {
    let mut loss = 0.0;
    let mut tokens = 0usize;
    for b in batches {
        let (l, n) = forward_loss(spec, params, b)?;
        loss += l;
        tokens += n;
    }
    if tokens == 0 {
        return Err(Error::Empty("validation set"));
    }
    Ok(loss / tokens as f64)
}

/// True when each of the last `patience` evaluations failed to beat the
/// best CE seen before it by more than `min_delta`.
pub fn should_stop(history: &[f64], patience: usize, min_delta: f64) -> bool {
    if patience == 0 || history.len() <= patience {
        return false;
    }
    let split = history.len() - patience;
    let mut best = history[..split].iter().copied().fold(f64::INFINITY, f64::min);
    for &ce in &history[split..] {
        if ce < best - min_delta {
            return false;
        }
        best = best.min(ce);
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsRecord {
    pub sim_time: f64,
    pub wall_time: f64,
    pub global_updates: u64,
    /// Fractional epochs: words processed over corpus tokens.
    pub epoch: f64,
    pub words_processed: u64,
    /// Training loss per token since the previous record; absent before
    /// the first update.
    pub train_ce_per_token: Option<f64>,
    pub valid_ce_per_token: f64,
    /// Words per simulated second since the start.
    pub wps: f64,
    pub mean_staleness: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSummary {
    pub name: String,
    pub global_updates: u64,
    pub sim_time: f64,
    pub wall_time: f64,
    pub words_processed: u64,
    pub corpus_tokens: u64,
    pub epochs_completed: u64,
    /// Words beyond the last complete epoch.
    pub partial_epoch_words: u64,
    pub final_valid_ce: f64,
    pub best_valid_ce: f64,
    pub entropy_floor: f64,
    pub target_ce: f64,
    /// Simulated time of the first evaluation at or below `target_ce`.
    pub sim_time_to_target: Option<f64>,
    pub wps: f64,
    pub mean_staleness: f64,
    pub max_staleness: u64,
    pub stopped_early: bool,
}

/// Corpora, batches and initial parameters for one configuration.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Corpus,
    pub valid: Corpus,
    pub packed: PackedBatches,
    pub valid_batches: Vec<Batch>,
    pub source: MarkovSource,
    pub init: ParamVector,
    pub entropy_floor: f64,
}

impl ExperimentData {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validated()?;
        let corpus_spec = cfg.corpus_spec();
        let seed = cfg.data.seed;
        let train = corpus_spec.generate(seed, Split::Train)?;
        let valid = CorpusSpec { n_sentences: cfg.data.valid_sentences, ..corpus_spec.clone() }.generate(seed, Split::Valid)?;
        let packed =
            pack_batches(&train, cfg.batch.word_budget, Some(rng::derive_seed(seed, &[0xba7c])), cfg.batch.sort_window)?;
        let valid_packed = pack_batches(&valid, cfg.batch.word_budget, None, 1)?;
        let valid_batches = valid_packed.batches.iter().map(|b| valid.batch(b)).collect::<Result<Vec<_>>>()?;
        let source = corpus_spec.source()?;
        let entropy_floor = source.entropy_floor(cfg.data.len_min, cfg.data.len_max);
        let init = init_params(&cfg.model, rng::derive_seed(seed, &[0x1417]))?;
        Ok(Self { train, valid, packed, valid_batches, source, init, entropy_floor })
    }

    pub fn sim_setup<'a>(&'a self, cfg: &'a ExperimentConfig, schedule: &'a TrainSchedule) -> SimSetup<'a> {
        SimSetup {
            spec: &cfg.model,
            schedule,
            cost: cfg.cost_model(),
            corpus: &self.train,
            packed: &self.packed,
            data_seed: rng::derive_seed(cfg.data.seed, &[0xe90c]),
            sim_seed: cfg.sim.seed,
            n_workers: cfg.train.workers,
            tau: cfg.train.tau,
            beta2: cfg.optimizer.beta2,
            eps: cfg.optimizer.eps,
        }
    }
}

/// Turns the push stream into evaluations and decides when to stop. Shared
/// by the deterministic loop and the threaded runner.
#[derive(Debug, Clone)]
pub struct MetricsTracker {
    spec: ModelSpec,
    stop: StopSection,
    corpus_tokens: u64,
    target_ce: f64,
    words: u64,
    pushes: u64,
    staleness_sum: u64,
    max_staleness: u64,
    window_loss: f64,
    window_tokens: u64,
    history: Vec<f64>,
    records: Vec<MetricsRecord>,
    time_to_target: Option<f64>,
    stopped_early: bool,
}

impl MetricsTracker {
    pub fn new(cfg: &ExperimentConfig, data: &ExperimentData) -> Self {
        Self {
            spec: cfg.model,
            stop: cfg.stop,
            corpus_tokens: data.train.total_tokens() as u64,
            target_ce: cfg.stop.target_ce_ratio * data.entropy_floor,
            words: 0,
            pushes: 0,
            staleness_sum: 0,
            max_staleness: 0,
            window_loss: 0.0,
            window_tokens: 0,
            history: Vec::new(),
            records: Vec::new(),
            time_to_target: None,
            stopped_early: false,
        }
    }

    pub fn target_ce(&self) -> f64 {
        self.target_ce
    }

    /// Accounts one push.
    pub fn observe(&mut self, loss: f64, tokens: usize, staleness: u64) {
        self.words += tokens as u64;
        self.pushes += 1;
        self.staleness_sum += staleness;
        self.max_staleness = self.max_staleness.max(staleness);
        self.window_loss += loss;
        self.window_tokens += tokens as u64;
    }

    /// Whether an evaluation is due after `updates` global updates.
    pub fn due(&self, updates: u64) -> bool {
        updates % self.stop.eval_every_updates == 0 || updates >= self.stop.max_updates
    }

    pub fn finished(&self, updates: u64) -> bool {
        self.stopped_early || updates >= self.stop.max_updates
    }

    /// Evaluates `params` against the validation batches and records the result.
    pub fn evaluate_at(
        &mut self,
        updates: u64,
        sim_time: f64,
        wall_time: f64,
        params: &ParamVector,
        valid: &[Batch],
    ) -> Result<&MetricsRecord> {
        let ce = evaluate(&self.spec, params, valid)?;
        if !ce.is_finite() {
            return Err(Error::NonFinite { segment: "valid_ce".to_string() });
        }
        let train_ce = (self.window_tokens > 0).then(|| self.window_loss / self.window_tokens as f64);
        self.window_loss = 0.0;
        self.window_tokens = 0;
        self.history.push(ce);
        if self.time_to_target.is_none() && ce <= self.target_ce {
            self.time_to_target = Some(sim_time);
        }
        if should_stop(&self.history, self.stop.patience, self.stop.min_delta) {
            self.stopped_early = true;
        }
        self.records.push(MetricsRecord {
            sim_time,
            wall_time,
            global_updates: updates,
            epoch: self.words as f64 / self.corpus_tokens as f64,
            words_processed: self.words,
            train_ce_per_token: train_ce,
            valid_ce_per_token: ce,
            wps: if sim_time > 0.0 { self.words as f64 / sim_time } else { 0.0 },
            mean_staleness: if self.pushes > 0 { self.staleness_sum as f64 / self.pushes as f64 } else { 0.0 },
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    pub fn summary(&self, name: &str, updates: u64, sim_time: f64, wall_time: f64, entropy_floor: f64) -> RunSummary {
        let last = self.history.last().copied().unwrap_or(f64::NAN);
        RunSummary {
            name: name.to_string(),
            global_updates: updates,
            sim_time,
            wall_time,
            words_processed: self.words,
            corpus_tokens: self.corpus_tokens,
            epochs_completed: self.words / self.corpus_tokens,
            partial_epoch_words: self.words % self.corpus_tokens,
            final_valid_ce: last,
            best_valid_ce: self.history.iter().copied().fold(f64::INFINITY, f64::min),
            entropy_floor,
            target_ce: self.target_ce,
            sim_time_to_target: self.time_to_target,
            wps: if sim_time > 0.0 { self.words as f64 / sim_time } else { 0.0 },
            mean_staleness: if self.pushes > 0 { self.staleness_sum as f64 / self.pushes as f64 } else { 0.0 },
            max_staleness: self.max_staleness,
            stopped_early: self.stopped_early,
        }
    }

    pub fn into_records(self) -> Vec<MetricsRecord> {
        self.records
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: RunSummary,
    pub params: ParamVector,
    pub pushes: Vec<PushRecord>,
}

pub fn make_trainer<'a>(
    cfg: &'a ExperimentConfig,
    data: &'a ExperimentData,
    schedule: &'a TrainSchedule,
) -> Result<Box<dyn Trainer + 'a>> {
    let setup = data.sim_setup(cfg, schedule);
    Ok(match cfg.train.mode {
        TrainMode::Async => Box::new(AsyncSim::new(setup, data.init.clone())?),
        TrainMode::Sync => Box::new(SyncSim::new(setup, data.init.clone())?),
    })
}

/// Deterministic-mode run. `wall_clock` supplies elapsed real seconds for
/// the `wall_time` field.
pub fn run_experiment_with_clock(cfg: &ExperimentConfig, wall_clock: &mut dyn FnMut() -> f64) -> Result<RunOutput> {
    if cfg.sim.mode == SimMode::Concurrent {
        return Err(Error::invalid("sim.mode = concurrent needs the threaded runner"));
    }
    let data = ExperimentData::prepare(cfg)?;
    run_prepared(cfg, &data, wall_clock)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_with_clock(cfg, &mut || 0.0)
}

pub fn run_prepared(cfg: &ExperimentConfig, data: &ExperimentData, wall_clock: &mut dyn FnMut() -> f64) -> Result<RunOutput> {
    let schedule = cfg.schedule();
    let mut trainer = make_trainer(cfg, data, &schedule)?;
    let mut tracker = MetricsTracker::new(cfg, data);
    tracker.evaluate_at(0, 0.0, wall_clock(), &data.init, &data.valid_batches)?;

    let mut updates = 0;
    while !tracker.finished(updates) {
        let report = trainer.step()?;
        updates = trainer.store().updates();
        tracker.observe(report.loss, report.tokens, report.staleness);
        if tracker.due(updates) {
            tracker.evaluate_at(updates, trainer.clock(), wall_clock(), trainer.store().params(), &data.valid_batches)?;
        }
    }

    let summary = tracker.summary(&cfg.experiment.name, updates, trainer.clock(), wall_clock(), data.entropy_floor);
    let pushes = trainer.store().push_log().to_vec();
    let params = trainer.store().params().clone();
    Ok(RunOutput { records: tracker.into_records(), summary, params, pushes })
}

/// The push log of a run without evaluations, after `pushes` updates.
pub fn run_sim(cfg: &ExperimentConfig, pushes: u64) -> Result<crate::sim::EventLog> {
    let data = ExperimentData::prepare(cfg)?;
    let schedule = cfg.schedule();
    let mut trainer = make_trainer(cfg, &data, &schedule)?;
    crate::sim::run_pushes(trainer.as_mut(), pushes)
}

/// Staleness summary of a finished run.
pub fn run_staleness(output: &RunOutput) -> Result<crate::sim::StalenessStats> {
    staleness_stats(&output.pushes)
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub value: String,
    pub sim_time_to_target: Option<f64>,
    pub final_ce: f64,
    pub wps: f64,
    pub mean_staleness: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "value,sim_time_to_target,final_ce,wps,mean_staleness";

    pub fn from_summary(value: impl Into<String>, s: &RunSummary) -> Self {
        Self {
            value: value.into(),
            sim_time_to_target: s.sim_time_to_target,
            final_ce: s.final_valid_ce,
            wps: s.wps,
            mean_staleness: s.mean_staleness,
        }
    }

    pub fn to_csv_line(&self) -> String {
        let t = self.sim_time_to_target.map(|t| format!("{t}")).unwrap_or_default();
        format!("{},{},{},{},{}", self.value, t, self.final_ce, self.wps, self.mean_staleness)
    }
}
