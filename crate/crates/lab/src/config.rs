//! Experiment configs as TOML files, with dotted-path overrides for sweeps.

use std::path::Path;

use delaylab_core::harness::ExperimentConfig;
use toml::{Table, Value};

use crate::error::{LabError, LabResult};

/// Parses and validates a config; unknown keys are rejected.
pub fn parse(text: &str, origin: &Path) -> LabResult<ExperimentConfig> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|source| LabError::Parse { path: origin.to_path_buf(), source })?;
    check(&cfg)?;
    Ok(cfg)
}

pub fn load(path: &Path) -> LabResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse(&text, path)
}

pub fn check(cfg: &ExperimentConfig) -> LabResult<()> {
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(LabError::Validation(issues))
    }
}

pub fn to_toml(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("config always serializes")
}

/// Returns `cfg` with the value at a dotted key path (`train.tau`,
/// `optimizer.base_lr`, ...) replaced. The value is read as a TOML literal,
/// falling back to a bare string.
pub fn with_override(cfg: &ExperimentConfig, key: &str, raw: &str) -> LabResult<ExperimentConfig> {
    let mut table = Table::try_from(cfg).expect("config always serializes");
    let (section, field) = key.split_once('.').ok_or_else(|| LabError::UnknownKey(key.to_string()))?;
    let slot = table
        .get_mut(section)
        .and_then(Value::as_table_mut)
        .and_then(|t| t.get_mut(field))
        .ok_or_else(|| LabError::UnknownKey(key.to_string()))?;
    *slot = parse_value(raw);
    let bad = |message: String| LabError::BadValue { key: key.to_string(), message };
    let updated: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| bad(e.message().to_string()))?;
    check(&updated)?;
    Ok(updated)
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
