//! Time-varying hyperparameters: learning-rate warmup and inverse square
//! root cooldown, the β1 (momentum) cooldown, the local-optimizer window and
//! the τ learning-rate scaling helpers.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Cooldown {
    #[default]
    None,
    InvSqrt,
}

/// How accumulated gradients are normalized before the optimizer sees them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum LrMode {
    /// Divide by the group's token count; the lr is scaled by τ instead.
    #[default]
    MeanTokens,
    /// Use the raw summed gradient; it already grows with the batch.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSchedule {
    pub base_lr: f64,
    /// Global steps of linear warmup; 0 disables warmup.
    pub warmup_steps: u64,
    pub cooldown: Cooldown,
    pub beta1_before: f64,
    pub beta1_after: f64,
    pub beta1_switch_step: u64,
    /// Micro-batches per worker during which local optimizers run.
    pub local_opt_window: u64,
    pub lr_mode: LrMode,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            base_lr: 0.00045,
            warmup_steps: 300,
            cooldown: Cooldown::None,
            beta1_before: 0.9,
            beta1_after: 0.5,
            beta1_switch_step: 1000,
            local_opt_window: 400,
            lr_mode: LrMode::MeanTokens,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid("base_lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1_before) || !(0.0..1.0).contains(&self.beta1_after) {
            return Err(Error::invalid("beta1 values must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Learning rate for global step `t` (1-based), before τ scaling.
    pub fn lr_at(&self, t: u64) -> f64 {
        let t = t.max(1) as f64;
        let w = self.warmup_steps as f64;
        match (self.cooldown, self.warmup_steps) {
            (Cooldown::None, 0) => self.base_lr,
            (Cooldown::None, _) => self.base_lr * (t / w).min(1.0),
            (Cooldown::InvSqrt, 0) => self.base_lr / libm::sqrt(t),
            (Cooldown::InvSqrt, _) if t <= w => self.base_lr * (t / w),
            (Cooldown::InvSqrt, _) => self.base_lr * libm::sqrt(w / t),
        }
    }

    pub fn beta1_at(&self, t: u64) -> f64 {
        if t < self.beta1_switch_step {
            self.beta1_before
        } else {
            self.beta1_after
        }
    }

    /// Whether a worker that has already seen `microbatches_seen`
    /// micro-batches still runs its local optimizer.
    pub fn local_opt_enabled(&self, microbatches_seen: u64) -> bool {
        microbatches_seen < self.local_opt_window
    }

    /// Learning rate of the global optimizer at step `t` for groups of `tau`
    /// micro-batches.
    pub fn global_lr_at(&self, t: u64, tau: usize) -> f64 {
        scaled_lr(self.lr_at(t), tau, self.lr_mode)
    }
}

/// Linear scaling rule: an optimizer fed the token-mean of a τ× larger batch
/// gets a τ× larger learning rate. Summed gradients already scale with the
/// batch, so `Sum` leaves the rate alone.
pub fn scaled_lr(base_lr: f64, tau: usize, mode: LrMode) -> f64 {
    match mode {
        LrMode::MeanTokens => base_lr * tau as f64,
        LrMode::Sum => base_lr,
    }
}

/// Local optimizers see one micro-batch, τ times smaller than the global
/// optimizer's effective batch.
pub fn local_lr(global_lr: f64, tau: usize) -> f64 {
    global_lr / tau as f64
}
