//! Run artifacts: `metrics.jsonl` (one record per evaluation),
//! `summary.csv`, `pushes.csv`, `params.json` and the resolved `config.toml`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use delaylab_core::harness::{ExperimentConfig, MetricsRecord, RunOutput, RunSummary};
use delaylab_core::numerics::ParamVector;
use delaylab_core::pserver::PushRecord;
use delaylab_core::sim::EventLog;
use serde::Serialize;

use crate::error::{LabError, LabResult};

pub const SUMMARY_HEADER: &str = "name,global_updates,sim_time,wall_time,words_processed,corpus_tokens,\
epochs_completed,partial_epoch_words,final_valid_ce,best_valid_ce,entropy_floor,target_ce,\
sim_time_to_target,wps,mean_staleness,max_staleness,stopped_early";

pub fn metrics_jsonl(records: &[MetricsRecord]) -> LabResult<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn summary_csv(s: &RunSummary) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    let target = s.sim_time_to_target.map(|t| t.to_string()).unwrap_or_default();
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s.name,
        s.global_updates,
        s.sim_time,
        s.wall_time,
        s.words_processed,
        s.corpus_tokens,
        s.epochs_completed,
        s.partial_epoch_words,
        s.final_valid_ce,
        s.best_valid_ce,
        s.entropy_floor,
        s.target_ce,
        target,
        s.wps,
        s.mean_staleness,
        s.max_staleness,
        s.stopped_early
    );
    out
}

#[derive(Serialize)]
struct SegmentOut<'a> {
    name: &'a str,
    offset: usize,
    values: &'a [f64],
}

pub fn params_json(params: &ParamVector) -> LabResult<String> {
    let segments: Vec<SegmentOut<'_>> = params
        .layout()
        .segments()
        .iter()
        .map(|s| SegmentOut { name: &s.name, offset: s.offset, values: &params.as_slice()[s.range()] })
        .collect();
    Ok(serde_json::to_string_pretty(&segments)?)
}

pub fn pushes_csv(pushes: &[PushRecord]) -> String {
    EventLog { records: pushes.to_vec() }.to_csv()
}

fn write(dir: &Path, name: &str, contents: &str) -> LabResult<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| LabError::io(path, e))
}

pub fn write_run(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> LabResult<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    write(dir, "config.toml", &crate::config::to_toml(cfg))?;
    write(dir, "metrics.jsonl", &metrics_jsonl(&out.records)?)?;
    write(dir, "summary.csv", &summary_csv(&out.summary))?;
    write(dir, "pushes.csv", &pushes_csv(&out.pushes))?;
    write(dir, "params.json", &params_json(&out.params)?)
}
