//! One run per value of a single config key, with everything else shared.

use delaylab_core::harness::{run_experiment, ExperimentConfig, RunOutput, SimMode, SweepRow};

use crate::concurrent::run_concurrent;
use crate::config::with_override;
use crate::error::{LabError, LabResult};

/// Runs `cfg` in the mode it asks for.
pub fn run(cfg: &ExperimentConfig) -> LabResult<RunOutput> {
    match cfg.sim.mode {
        SimMode::Deterministic => Ok(run_experiment(cfg)?),
        SimMode::Concurrent => run_concurrent(cfg),
    }
}

pub fn sweep(cfg: &ExperimentConfig, key: &str, values: &[String]) -> LabResult<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(LabError::BadValue { key: key.to_string(), message: "no values given".to_string() });
    }
    // Resolve every override before running anything.
    let configs = values.iter().map(|v| with_override(cfg, key, v)).collect::<LabResult<Vec<_>>>()?;
    configs
        .iter()
        .zip(values)
        .map(|(c, v)| Ok(SweepRow::from_summary(v.trim(), &run(c)?.summary)))
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{}\n", SweepRow::CSV_HEADER);
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}
