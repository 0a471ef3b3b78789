use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KvMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Halve the rate every `step_every` iterations.
    StepHalf,
    /// Cosine annealing from `base_lr` to `min_lr` over `total` iterations.
    Cosine,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::StepHalf => "step_half",
            ScheduleKind::Cosine => "cosine",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step_half" => Ok(ScheduleKind::StepHalf),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::Config(format!(
                "unknown schedule {other:?}; expected step_half or cosine"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub base_lr: f64,
    pub step_every: u64,
    pub min_lr: f64,
    pub total: u64,
}

impl Schedule {
    /// Synthetic-noise protocol: 1e-4 halved every 1e5 iterations.
    pub fn step_half_default() -> Self {
        Schedule {
            kind: ScheduleKind::StepHalf,
            base_lr: 1e-4,
            step_every: 100_000,
            min_lr: 0.0,
            total: 600_000,
        }
    }

    /// Real-noise protocol: cosine from 2e-4 down to 1e-6.
    pub fn cosine(base_lr: f64, min_lr: f64, total: u64) -> Self {
        Schedule {
            kind: ScheduleKind::Cosine,
            base_lr,
            step_every: 0,
            min_lr,
            total,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > self.min_lr && self.min_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rates must satisfy base_lr > min_lr >= 0, got {} and {}",
                self.base_lr, self.min_lr
            )));
        }
        match self.kind {
            ScheduleKind::StepHalf if self.step_every == 0 => {
                Err(Error::Config("step_half schedule needs step_every > 0".into()))
            }
            ScheduleKind::Cosine if self.total == 0 => {
                Err(Error::Config("cosine schedule needs total > 0".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn write_kv(&self, map: &mut KvMap, prefix: &str) {
        map.set(&format!("{prefix}kind"), self.kind);
        map.set(&format!("{prefix}base_lr"), self.base_lr);
        map.set(&format!("{prefix}min_lr"), self.min_lr);
        map.set(&format!("{prefix}step_every"), self.step_every);
        map.set(&format!("{prefix}total"), self.total);
    }

    pub fn read_kv(mut self, map: &KvMap, prefix: &str) -> Result<Self> {
        let k = |n: &str| format!("{prefix}{n}");
        if let Some(v) = map.get_parsed(&k("kind"))? {
            self.kind = v;
        }
        if let Some(v) = map.get_parsed(&k("base_lr"))? {
            self.base_lr = v;
        }
        if let Some(v) = map.get_parsed(&k("min_lr"))? {
            self.min_lr = v;
        }
        if let Some(v) = map.get_parsed(&k("step_every"))? {
            self.step_every = v;
        }
        if let Some(v) = map.get_parsed(&k("total"))? {
            self.total = v;
        }
        self.validate()?;
        Ok(self)
    }
}

/// Learning rate used at iteration `iter`; cosine clamps at `min_lr` past `total`.
pub fn lr_at(s: &Schedule, iter: u64) -> f64 {
    match s.kind {
        ScheduleKind::StepHalf => {
            let halvings = iter / s.step_every.max(1);
            s.base_lr * 0.5f64.powi(halvings.min(2048) as i32)
        }
        ScheduleKind::Cosine => {
            let frac = iter.min(s.total) as f64 / s.total.max(1) as f64;
            s.min_lr + (s.base_lr - s.min_lr) * (1.0 + (std::f64::consts::PI * frac).cos()) / 2.0
        }
    }
}
