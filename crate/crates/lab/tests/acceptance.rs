//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use delaylab_core::datagen::{gen_corpus, pack_batches, Pattern};
use delaylab_core::harness::{run_experiment, run_sim, should_stop, ExperimentConfig, RunOutput, TrainMode};
use delaylab_core::models::{
    backward, gradcheck_spec, gradcheck_suite, gradcheck_tolerance, init_params, Batch, ModelSpec,
};
use delaylab_core::numerics::{ParamLayout, ParamVector};
use delaylab_core::optim::{adam_step, adam_step_ranged, AdamState, HyperParams};
use delaylab_core::pserver::GradAccumulator;
use delaylab_core::rng::mix64;
use delaylab_core::schedules::{LrMode, TrainSchedule};
use delaylab_core::sim::{staleness_stats, wps, AsyncSim, BatchFeeder, CostModel, SimSetup, Trainer};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()) })
        .fold(0.0, f64::max)
}

/// max |a - b| / max |b|; elementwise ratios blow up on parameters that
/// drift through zero.
fn norm_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    diff / b.iter().map(|y| y.abs()).fold(0.0, f64::max)
}

/// Uniform in [lo, hi) from a counter; enough randomness for test vectors.
fn uniform(key: u64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * ((mix64(key) >> 11) as f64 / (1u64 << 53) as f64)
}

fn core_err(e: delaylab_core::Error) -> String {
    e.to_string()
}

fn gradient_correctness() -> Check {
    let mut parts = Vec::new();
    for kind in ["linear_regression", "mlp_classifier", "gru_lm"] {
        let spec = gradcheck_spec(kind).expect("known kind");
        let tol = gradcheck_tolerance(&spec);
        let errs = gradcheck_suite(&spec, 0, 20).map_err(core_err)?;
        let worst = errs.iter().copied().fold(0.0, f64::max);
        ensure(errs.len() == 20 && worst <= tol, || format!("{kind}: worst {worst:e} > {tol:e}"))?;
        parts.push(format!("{kind} {worst:.1e}"));
    }
    Ok(format!("20 instances each, worst: {}", parts.join(", ")))
}

fn adam_oracle() -> Check {
    let layout = std::sync::Arc::new(ParamLayout::new([("x", 1)]).map_err(core_err)?);
    let hp = HyperParams { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
    let mut p = ParamVector::from_values(&layout, vec![0.7]).map_err(core_err)?;
    let mut state = AdamState::new(1);
    let (mut theta, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
    let mut worst: f64 = 0.0;
    for t in 1..=1000i32 {
        let g = uniform(t as u64, -2.0, 2.0);
        let grad = ParamVector::from_values(&layout, vec![g]).map_err(core_err)?;
        adam_step(&mut p, &grad, &mut state, &hp).map_err(core_err)?;
        m = hp.beta1 * m + (1.0 - hp.beta1) * g;
        v = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
        let mh = m / (1.0 - hp.beta1.powi(t));
        let vh = v / (1.0 - hp.beta2.powi(t));
        theta -= hp.lr * mh / (vh.sqrt() + hp.eps);
        worst = worst.max(rel_err(p.as_slice(), &[theta]));
    }
    ensure(worst <= 1e-12, || format!("scalar trajectory rel err {worst:e}"))?;

    let n = 50;
    let layout = std::sync::Arc::new(ParamLayout::new([("x", n)]).map_err(core_err)?);
    let init: Vec<f64> = (0..n).map(|i| uniform(10_000 + i as u64, -1.0, 1.0)).collect();
    let cuts = [0, 7, 8, 23, 41, n];
    let mut whole = ParamVector::from_values(&layout, init.clone()).map_err(core_err)?;
    let mut pieces = whole.clone();
    let mut whole_state = AdamState::new(n);
    let mut piece_states: Vec<AdamState> = cuts.windows(2).map(|w| AdamState::new(w[1] - w[0])).collect();
    let mut shard_worst: f64 = 0.0;
    for step in 0..50u64 {
        let g: Vec<f64> = (0..n).map(|i| uniform(20_000 + step * 100 + i as u64, -3.0, 3.0)).collect();
        let grad = ParamVector::from_values(&layout, g).map_err(core_err)?;
        adam_step(&mut whole, &grad, &mut whole_state, &hp).map_err(core_err)?;
        for (w, st) in cuts.windows(2).zip(piece_states.iter_mut()) {
            adam_step_ranged(&mut pieces, &grad, st, &hp, w[0], w[1]).map_err(core_err)?;
        }
        shard_worst = shard_worst.max(rel_err(whole.as_slice(), pieces.as_slice()));
    }
    ensure(shard_worst <= 1e-15, || format!("sharded cover rel err {shard_worst:e}"))?;
    Ok(format!("scalar rel err {worst:.1e} over 1000 steps, sharded cover rel err {shard_worst:.1e}"))
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.n_sentences = 300;
    cfg.data.vocab = 8;
    cfg.data.len_min = 3;
    cfg.data.len_max = 12;
    cfg.data.valid_sentences = 40;
    cfg.model = ModelSpec::GruLm { vocab: 8, embed_dim: 4, hidden: 6 };
    cfg.batch.word_budget = 60;
    cfg.stop.max_updates = 20;
    cfg.stop.eval_every_updates = 5;
    cfg
}

fn delayed_update_equivalence() -> Check {
    let spec = ModelSpec::GruLm { vocab: 8, embed_dim: 4, hidden: 6 };
    let corpus = gen_corpus(3, 300, 8, 3, 12, Pattern::Default).map_err(core_err)?;
    let packed = pack_batches(&corpus, 60, Some(3), 50).map_err(core_err)?;
    let params = init_params(&spec, 3).map_err(core_err)?;
    let mut worst: f64 = 0.0;
    for tau in [2usize, 4] {
        for start in 0..5 {
            let bs: Vec<Batch> = packed.batches[start * tau..(start + 1) * tau]
                .iter()
                .map(|b| corpus.batch(b))
                .collect::<Result<_, _>>()
                .map_err(core_err)?;
            let mut acc = GradAccumulator::new(&params);
            for b in &bs {
                let lg = backward(&spec, &params, b).map_err(core_err)?;
                acc.accumulate(&lg.grad, lg.tokens).map_err(core_err)?;
            }
            let mut concat = bs[0].clone();
            for b in &bs[1..] {
                concat = concat.concat(b).map_err(core_err)?;
            }
            let whole = backward(&spec, &params, &concat).map_err(core_err)?;
            let expected: Vec<f64> = whole.grad.as_slice().iter().map(|g| g / whole.tokens as f64).collect();
            worst = worst.max(rel_err(acc.effective_gradient(LrMode::MeanTokens).as_slice(), &expected));
        }
    }
    ensure(worst <= 1e-12, || format!("effective vs concatenated gradient rel err {worst:e}"))?;

    let mut sync_worst: f64 = 0.0;
    for n in [2usize, 4] {
        let mut sync = small_config();
        sync.train.mode = TrainMode::Sync;
        sync.train.workers = n;
        let mut single = small_config();
        single.train.workers = 1;
        single.train.tau = n;
        let a = run_experiment(&sync).map_err(core_err)?;
        let b = run_experiment(&single).map_err(core_err)?;
        sync_worst = sync_worst.max(rel_err(a.params.as_slice(), b.params.as_slice()));
    }
    ensure(sync_worst <= 1e-12, || format!("sync vs single-worker group rel err {sync_worst:e}"))?;
    Ok(format!("tau 2/4 rel err {worst:.1e}; sync N vs async tau=N rel err {sync_worst:.1e} after 20 steps"))
}

fn one_worker_degeneration() -> Check {
    let spec = ModelSpec::GruLm { vocab: 8, embed_dim: 4, hidden: 6 };
    let corpus = gen_corpus(9, 300, 8, 3, 12, Pattern::Default).map_err(core_err)?;
    let packed = pack_batches(&corpus, 60, Some(9), 50).map_err(core_err)?;
    let init = init_params(&spec, 9).map_err(core_err)?;
    let schedule = TrainSchedule { base_lr: 0.005, warmup_steps: 20, local_opt_window: 0, ..TrainSchedule::default() };
    let setup = SimSetup {
        spec: &spec,
        schedule: &schedule,
        cost: CostModel::default(),
        corpus: &corpus,
        packed: &packed,
        data_seed: 4,
        sim_seed: 0,
        n_workers: 1,
        tau: 1,
        beta2: 0.999,
        eps: 1e-8,
    };
    let mut sim = AsyncSim::new(setup, init.clone()).map_err(core_err)?;
    let mut feeder = BatchFeeder::new(&corpus, &packed, 4, 1).map_err(core_err)?;
    let mut theta = init.as_slice().to_vec();
    let (mut m, mut v) = (vec![0.0; theta.len()], vec![0.0; theta.len()]);
    let mut worst: f64 = 0.0;
    for t in 1..=200u64 {
        sim.step().map_err(core_err)?;
        let current = ParamVector::from_values(init.layout(), theta.clone()).map_err(core_err)?;
        let lg = backward(&spec, &current, &feeder.global(t - 1).map_err(core_err)?).map_err(core_err)?;
        let (lr, b1, b2, eps) = (schedule.lr_at(t), schedule.beta1_at(t), 0.999f64, 1e-8);
        for i in 0..theta.len() {
            let g = lg.grad.as_slice()[i] / lg.tokens as f64;
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let mh = m[i] / (1.0 - b1.powi(t as i32));
            let vh = v[i] / (1.0 - b2.powi(t as i32));
            theta[i] -= lr * mh / (vh.sqrt() + eps);
        }
        worst = worst.max(norm_rel_err(sim.store().params().as_slice(), &theta));
    }
    ensure(worst <= 1e-12, || format!("trajectory rel err {worst:e}"))?;
    Ok(format!("200 updates, max norm-wise rel err along the trajectory {worst:.1e}"))
}

fn uniform_sim_config(workers: usize, tau: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.n_sentences = 1200;
    cfg.data.vocab = 4;
    cfg.data.len_min = 25;
    cfg.data.len_max = 25;
    cfg.data.valid_sentences = 4;
    cfg.model = ModelSpec::GruLm { vocab: 4, embed_dim: 2, hidden: 2 };
    cfg.batch.word_budget = 2500;
    cfg.train.workers = workers;
    cfg.train.tau = tau;
    cfg
}

fn staleness_determinism() -> Check {
    let cfg = uniform_sim_config(4, 1);
    let a = run_sim(&cfg, 60).map_err(core_err)?;
    let b = run_sim(&cfg, 60).map_err(core_err)?;
    let bad = a.records[4..].iter().filter(|r| r.staleness != 3).count();
    ensure(bad == 0, || format!("{bad} post-warm-start pushes with staleness != 3"))?;
    ensure(a == b && a.to_csv() == b.to_csv(), || "event logs differ between identical runs".to_string())?;
    let stats = staleness_stats(&a.records[4..]).map_err(core_err)?;
    Ok(format!("56 pushes after warm start: mean {}, max {}; two runs bit-identical", stats.mean, stats.max))
}

fn wps_trend() -> Check {
    let expected = [(1usize, 2500.0 / 0.30), (2, 5000.0 / 0.55), (4, 10000.0 / 1.05)];
    let mut last = 0.0;
    let mut shown = Vec::new();
    for (tau, want) in expected {
        let log = run_sim(&uniform_sim_config(1, tau), 10).map_err(core_err)?;
        let horizon = log.records.last().map(|r| r.sim_time).unwrap_or(0.0);
        let got = wps(&log.records, horizon).map_err(core_err)?;
        let err = (got - want).abs() / want;
        ensure(err <= 1e-6, || format!("tau {tau}: wps {got} vs {want} (rel err {err:e})"))?;
        ensure(got > last, || format!("tau {tau}: wps {got} not above {last}"))?;
        last = got;
        shown.push(format!("tau {tau}: {got:.1}"));
    }
    Ok(shown.join(", "))
}

fn convergence_config(seed: u64, with_tricks: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.seed = seed;
    cfg.sim.seed = seed;
    cfg.data.n_sentences = 20_000;
    cfg.data.vocab = 16;
    cfg.data.len_min = 5;
    cfg.data.len_max = 20;
    cfg.data.valid_sentences = 500;
    cfg.model = ModelSpec::GruLm { vocab: 16, embed_dim: 8, hidden: 16 };
    cfg.batch.word_budget = 500;
    cfg.train.workers = 4;
    cfg.train.tau = 2;
    cfg.optimizer.base_lr = 0.002;
    cfg.stop.eval_every_updates = 10;
    cfg.stop.patience = 10;
    cfg.stop.max_updates = 1500;
    cfg.stop.target_ce_ratio = 1.10;
    if with_tricks {
        cfg.local_opt.window = 400;
        cfg.schedule.beta1_after = 0.5;
        cfg.schedule.beta1_switch_step = 1000;
    }
    cfg
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn convergence_analog() -> Check {
    let mut arms = Vec::new();
    for with_tricks in [false, true] {
        let runs: Vec<RunOutput> = (1..=5u64)
            .map(|seed| run_experiment(&convergence_config(seed, with_tricks)))
            .collect::<Result<_, _>>()
            .map_err(core_err)?;
        let missing = runs.iter().filter(|r| r.summary.sim_time_to_target.is_none()).count();
        ensure(missing == 0, || format!("{missing} runs (with_tricks = {with_tricks}) never reached the target CE"))?;
        let t = median(runs.iter().filter_map(|r| r.summary.sim_time_to_target).collect());
        let ce = median(runs.iter().map(|r| r.summary.final_valid_ce).collect());
        arms.push((t, ce, runs[0].summary.target_ce));
    }
    let ((t_without, ce_without, target), (t_with, ce_with, _)) = (arms[0], arms[1]);
    let ce_gap = (ce_with - ce_without).abs() / ce_without;
    let detail = format!(
        "median time to CE <= {target:.4}: {t_with:.2}s with vs {t_without:.2}s without; final CE {ce_with:.4} vs {ce_without:.4} ({:.2}%)",
        100.0 * ce_gap
    );
    ensure(t_with < t_without, || detail.clone())?;
    ensure(ce_gap <= 0.02, || detail.clone())?;
    Ok(detail)
}

fn early_stopping() -> Check {
    let history = [50.0, 49.0, 49.5, 49.4, 49.6, 49.2, 49.3];
    let fired: Vec<usize> = (0..history.len()).filter(|&i| should_stop(&history[..=i], 5, 0.0)).collect();
    ensure(fired.first() == Some(&6), || format!("fired at {fired:?}, expected first at 6"))?;
    for len in 1..60 {
        let improving: Vec<f64> = (0..len).map(|i| 10.0 / (1.0 + i as f64)).collect();
        for patience in 1..8 {
            ensure(!should_stop(&improving, patience, 0.0), || format!("fired on improving history of length {len}"))?;
        }
    }
    Ok("stall example fires first at index 6; strictly improving histories never fire".to_string())
}

fn packing_invariants() -> Check {
    let budgets = [16usize, 32, 64, 128, 256, 512];
    for seed in 0..10u64 {
        let corpus = gen_corpus(seed, 500, 12, 1, 40, Pattern::Sparse(seed)).map_err(core_err)?;
        let mut last_mean = 0.0;
        for budget in budgets {
            let packed = pack_batches(&corpus, budget, Some(seed), 64).map_err(core_err)?;
            let mut seen = vec![0u32; corpus.sentences.len()];
            for b in &packed.batches {
                let tokens: usize = b.indices.iter().map(|&i| corpus.sentences[i].len()).sum();
                ensure(tokens == b.tokens, || format!("seed {seed}: batch token count mismatch"))?;
                let fits = if b.oversized { b.indices.len() == 1 && b.tokens > budget } else { b.tokens <= budget };
                ensure(fits, || format!("seed {seed} budget {budget}: batch of {} tokens", b.tokens))?;
                b.indices.iter().for_each(|&i| seen[i] += 1);
            }
            ensure(seen.iter().all(|&c| c == 1), || format!("seed {seed}: sentences lost or duplicated"))?;
            ensure(packed.total_tokens() == corpus.total_tokens(), || format!("seed {seed}: tokens not conserved"))?;
            let mean = packed.mean_words();
            ensure(mean >= last_mean, || format!("seed {seed}: mean batch size fell at budget {budget}"))?;
            last_mean = mean;
        }
    }
    Ok(format!("10 corpora x budgets {budgets:?}: budgets respected, tokens conserved, mean size monotone"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("1 gradient correctness", gradient_correctness),
        ("2 adam oracle", adam_oracle),
        ("3 delayed-update equivalence", delayed_update_equivalence),
        ("4 one-worker degeneration", one_worker_degeneration),
        ("5 staleness determinism", staleness_determinism),
        ("6 wps trend", wps_trend),
        ("7 convergence analog", convergence_analog),
        ("8 early stopping", early_stopping),
        ("9 packing invariants", packing_invariants),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {name} ({secs:.1}s): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("[FAIL] {name} ({secs:.1}s): {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
