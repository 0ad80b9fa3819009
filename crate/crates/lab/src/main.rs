use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use delaylab::concurrent::run_concurrent;
use delaylab::sweep::{run, sweep, sweep_csv};
use delaylab::{config, output, LabError};
use delaylab_core::datagen::pack_batches;
use delaylab_core::harness::{run_experiment_with_clock, run_sim, ExperimentConfig, SimMode};
use delaylab_core::models::{gradcheck_spec, gradcheck_suite, gradcheck_tolerance};
use delaylab_core::sim::staleness_stats;

#[derive(Parser)]
#[command(name = "delaylab", version, about = "Delayed-update asynchronous SGD laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory for metrics.jsonl, summary.csv, pushes.csv, params.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record real elapsed seconds in wall_time (otherwise 0).
        #[arg(long)]
        wall_time: bool,
    },
    /// Run one experiment per value of a config key and print a CSV table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted key path, e.g. train.tau.
        #[arg(long)]
        key: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// linear_regression, mlp_classifier or gru_lm.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        instances: u64,
    },
    /// Pack a generated corpus and describe the batches.
    Pack {
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corpus settings come from this config's data section.
        #[arg(long)]
        config: Option<PathBuf>,
        /// One summary row instead of one row per batch.
        #[arg(long)]
        report: bool,
    },
    /// Print staleness statistics of a configuration's push log.
    Staleness {
        #[arg(long)]
        config: PathBuf,
        /// Simulate exactly this many pushes instead of a full run.
        #[arg(long)]
        pushes: Option<u64>,
    },
}

const ACCEPTANCE_FAILURE: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<LabError>().map(LabError::exit_code).unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { config: path, out, wall_time } => {
            let cfg = config::load(&path)?;
            let result = if wall_time && cfg.sim.mode == SimMode::Deterministic {
                let start = Instant::now();
                run_experiment_with_clock(&cfg, &mut || start.elapsed().as_secs_f64()).map_err(LabError::from)?
            } else {
                run(&cfg)?
            };
            if let Some(dir) = out {
                output::write_run(&dir, &cfg, &result)?;
                eprintln!("wrote {}", dir.display());
            }
            print!("{}", output::summary_csv(&result.summary));
        }
        Command::Sweep { config: path, key, values, out } => {
            let cfg = config::load(&path)?;
            let table = sweep_csv(&sweep(&cfg, &key, &values)?);
            match out {
                Some(p) => std::fs::write(&p, table).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{table}"),
            }
        }
        Command::Gradcheck { model, seed, instances } => {
            let spec = gradcheck_spec(&model)
                .ok_or_else(|| LabError::BadValue { key: "--model".into(), message: format!("unknown kind `{model}`") })?;
            let tol = gradcheck_tolerance(&spec);
            let errs = gradcheck_suite(&spec, seed, instances).map_err(LabError::from)?;
            println!("instance,max_rel_err");
            for (i, e) in errs.iter().enumerate() {
                println!("{},{e:e}", seed + i as u64);
            }
            let worst = errs.iter().copied().fold(0.0, f64::max);
            let ok = worst <= tol;
            eprintln!("{model}: worst {worst:e}, tolerance {tol:e}: {}", if ok { "ok" } else { "FAILED" });
            if !ok {
                return Ok(ExitCode::from(ACCEPTANCE_FAILURE));
            }
        }
        Command::Pack { budget, seed, config: path, report } => {
            let cfg = match path {
                Some(p) => config::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let corpus = cfg.corpus_spec().generate(cfg.data.seed, delaylab_core::datagen::Split::Train).map_err(LabError::from)?;
            let packed = pack_batches(&corpus, budget, Some(seed), cfg.batch.sort_window).map_err(LabError::from)?;
            if report {
                let r = packed.report();
                println!("word_budget,batches,mean_words,max_words,oversized");
                println!("{},{},{},{},{}", r.word_budget, r.batches, r.mean_words, r.max_words, r.oversized);
            } else {
                println!("batch,sentences,tokens,oversized");
                for (i, b) in packed.batches.iter().enumerate() {
                    println!("{i},{},{},{}", b.indices.len(), b.tokens, b.oversized);
                }
            }
        }
        Command::Staleness { config: path, pushes } => {
            let cfg = config::load(&path)?;
            let log = match (pushes, cfg.sim.mode) {
                (Some(n), SimMode::Deterministic) => run_sim(&cfg, n).map_err(LabError::from)?.records,
                (Some(_), SimMode::Concurrent) => {
                    return Err(LabError::BadValue {
                        key: "--pushes".into(),
                        message: "only available in deterministic mode".into(),
                    }
                    .into())
                }
                (None, SimMode::Concurrent) => run_concurrent(&cfg)?.pushes,
                (None, SimMode::Deterministic) => run(&cfg)?.pushes,
            };
            let stats = staleness_stats(&log).map_err(LabError::from)?;
            println!("pushes,mean,max");
            println!("{},{},{}", log.len(), stats.mean, stats.max);
            println!("staleness,count");
            for (s, n) in stats.histogram.iter().enumerate() {
                println!("{s},{n}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
