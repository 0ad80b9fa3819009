//! Core of a desk-scale laboratory for asynchronous SGD with delayed
//! (accumulated) gradient updates, sharded parameter serving, local
//! optimizers used as warmup, and momentum cooldown.
//!
//! Everything here is `no_std` + `alloc`: models with hand-written
//! gradients, the synthetic corpus and token-budget packer, Adam, the
//! schedules, the sharded store, the τ-group worker, the deterministic
//! discrete-event simulator and the experiment loop. File formats, the
//! CLI and the threaded Hogwild mode live in the `delaylab` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod datagen;
pub mod error;
pub mod harness;
pub mod models;
pub mod numerics;
pub mod optim;
pub mod pserver;
pub mod rng;
pub mod schedules;
pub mod sim;
pub mod worker;

pub use error::{Error, Result};
pub use numerics::{ParamLayout, ParamVector};
