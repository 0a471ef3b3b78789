//! Optimization loop, schedules and checkpoints.

mod adam;
mod checkpoint;
mod schedule;

pub use adam::{clip_grad_norm, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{checkpoint_dtype, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use schedule::{lr_at, Schedule, ScheduleKind};

use std::io::Write;
use std::path::Path;

use crate::data::{make_targets, Dataset};
use crate::error::{Error, Result};
use crate::losses::{total_loss_parts, LossConfig};
use crate::model::{make_pyramid, Model};
use crate::tensor::{Element, Tensor};

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    /// Zero-based index of the iteration this row describes.
    pub iter: u64,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_charbonnier: f64,
    pub loss_freq: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub const CSV_HEADER: &'static str = "iter,lr,loss_total,loss_charbonnier,loss_freq";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            s.push_str(&csv_row(r));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Means of `loss_total` over consecutive windows of `window` rows; a
    /// trailing partial window is dropped.
    pub fn window_means(&self, window: usize) -> Vec<f64> {
        self.rows
            .chunks_exact(window.max(1))
            .map(|c| c.iter().map(|r| r.loss_total).sum::<f64>() / c.len() as f64)
            .collect()
    }
}

pub fn csv_row(r: &LogRow) -> String {
    format!(
        "{},{},{},{},{}\n",
        r.iter, r.lr, r.loss_total, r.loss_charbonnier, r.loss_freq
    )
}

/// Model, optimizer state and data stream of one training run.
pub struct Trainer<T: Element = f32> {
    pub model: Model<T>,
    pub adam: AdamState<T>,
    pub loss: LossConfig,
    pub schedule: Schedule,
    pub dataset: Dataset,
    pub batch: usize,
    /// Global gradient-norm bound; off when `None`.
    pub clip: Option<f64>,
    /// Completed iterations.
    pub iteration: u64,
}

fn summary(t: &Tensor<impl Element>) -> String {
    let v = t.to_f64_vec();
    let finite = v.iter().filter(|x| x.is_finite()).count();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
    format!("min {min:.6} max {max:.6} mean {mean:.6} finite {finite}/{}", v.len())
}

impl<T: Element> Trainer<T> {
    pub fn new(model: Model<T>, dataset: Dataset, loss: LossConfig, schedule: Schedule, batch: usize) -> Result<Self> {
        let adam = AdamState::new(&model.params);
        Self::resume(model, adam, 0, dataset, loss, schedule, batch)
    }

    /// Continues a run after `iteration` completed iterations.
    pub fn resume(
        model: Model<T>,
        adam: AdamState<T>,
        iteration: u64,
        dataset: Dataset,
        loss: LossConfig,
        schedule: Schedule,
        batch: usize,
    ) -> Result<Self> {
        schedule.validate()?;
        loss.validate()?;
        if batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        if loss.scale_weights.len() != model.cfg.stages {
            return Err(Error::Config(format!(
                "{} loss weights for a {}-scale model",
                loss.scale_weights.len(),
                model.cfg.stages
            )));
        }
        if dataset.channels() != model.cfg.in_channels {
            return Err(Error::Config(format!(
                "dataset has {} channels, model expects {}",
                dataset.channels(),
                model.cfg.in_channels
            )));
        }
        dataset.manifest.check_levels(model.cfg.stages)?;
        Ok(Trainer {
            model,
            adam,
            loss,
            schedule,
            dataset,
            batch,
            clip: None,
            iteration,
        })
    }

    /// Sample, forward, loss, backward and update for the next iteration.
    pub fn step(&mut self) -> Result<LogRow> {
        let iter = self.iteration;
        let lr = lr_at(&self.schedule, iter);
        let levels = self.model.cfg.stages;
        let (noisy, clean) = self.dataset.batch::<T>(iter, self.batch)?;
        let pyramid = make_pyramid(&noisy, levels)?;
        let targets = make_targets(&clean, levels)?;
        let out = self.model.forward(&pyramid)?;
        let parts = total_loss_parts(&out.restored, &targets, &self.loss)?;
        let total = parts.total.item().to_f64().unwrap();
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: iter,
                stats: format!(
                    "noisy [{}], clean [{}], restored [{}]",
                    summary(&noisy),
                    summary(&clean),
                    summary(&out.restored[0])
                ),
            });
        }
        let result = parts.total.backward().and_then(|_| {
            if let Some(c) = self.clip {
                clip_grad_norm(&self.model.params, c);
            }
            self.adam.step(&mut self.model.params, lr)
        });
        self.model.params.zero_grad();
        result?;
        self.iteration += 1;
        Ok(LogRow {
            iter,
            lr,
            loss_total: total,
            loss_charbonnier: parts.charbonnier,
            loss_freq: parts.frequency,
        })
    }

    /// Runs `iters` iterations, logging every `report_every`-th one and the
    /// last; `on_step` sees every iteration.
    pub fn run_with(
        &mut self,
        iters: u64,
        report_every: u64,
        mut on_step: impl FnMut(&Trainer<T>, &LogRow) -> Result<()>,
    ) -> Result<TrainingLog> {
        let mut log = TrainingLog::default();
        for k in 0..iters {
            let row = self.step()?;
            if report_every > 0 && (k % report_every == 0 || k + 1 == iters) {
                log.rows.push(row);
            }
            on_step(self, &row)?;
        }
        Ok(log)
    }

    pub fn run(&mut self, iters: u64, report_every: u64) -> Result<TrainingLog> {
        self.run_with(iters, report_every, |_, _| Ok(()))
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint::from_model(&self.model, &self.adam, self.iteration, self.dataset.manifest.seed)
    }
}

/// Trains `model` in place for `iters` iterations from a fresh optimizer state.
pub fn train<T: Element>(
    model: &mut Model<T>,
    dataset: &Dataset,
    loss: &LossConfig,
    schedule: &Schedule,
    iters: u64,
    batch: usize,
    report_every: u64,
) -> Result<TrainingLog> {
    let mut tr = Trainer::new(model.clone(), dataset.clone(), loss.clone(), schedule.clone(), batch)?;
    let log = tr.run(iters, report_every)?;
    *model = tr.model;
    Ok(log)
}

/// Appends one CSV row to an open log writer.
pub fn append_csv(w: &mut impl Write, row: &LogRow) -> std::io::Result<()> {
    w.write_all(csv_row(row).as_bytes())
}
