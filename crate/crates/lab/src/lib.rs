//! Std companion to `delaylab-core`: TOML configs, metrics files, parameter
//! sweeps and a threaded runner that exercises the lock-free store.

pub mod concurrent;
pub mod config;
pub mod error;
pub mod output;
pub mod sweep;

pub use error::{LabError, LabResult};
