use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use madnet::data::{Dataset, DatasetManifest};
use madnet::kv::join;
use madnet::losses::LossConfig;
use madnet::model::{ablation_variant, AblationRow, Model, ModelConfig};
use madnet::trainer::{append_csv, checkpoint_dtype, Checkpoint, Schedule, Trainer, TrainingLog};
use madnet::{DType, Element};

use crate::{begin, create_dir, require_file, CliError, GlobalArgs, Preset, Settings, TrainArgs, RESOLVED_CONFIG};

/// Where a training run left its artifacts.
#[derive(Debug)]
pub struct TrainOutcome {
    pub out: PathBuf,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
    /// Rows logged by this invocation.
    pub log: TrainingLog,
    pub iteration: u64,
}

pub fn checkpoint_name(iteration: u64) -> String {
    format!("checkpoint_{iteration:07}.madn")
}

pub fn cmd_train(g: &GlobalArgs, a: &TrainArgs) -> Result<TrainOutcome, CliError> {
    let mut s = begin("train", g)?;
    let resume = s.pick_path("resume", a.resume.as_deref())?;
    let dtype = match &resume {
        Some(p) => {
            require_file(p, "--resume")?;
            let stored = checkpoint_dtype(p).map_err(CliError::usage)?;
            if g.dtype.is_some_and(|d| d != stored) {
                return Err(CliError::Usage(format!("--dtype conflicts with the {stored} checkpoint")));
            }
            s.record.set("dtype", stored);
            stored
        }
        None => s.pick("dtype", g.dtype, DType::F32)?,
    };
    match dtype {
        DType::F32 => train_typed::<f32>(s, g, a, resume.as_deref()),
        DType::F64 => train_typed::<f64>(s, g, a, resume.as_deref()),
    }
}

fn train_typed<T: Element>(
    mut s: Settings,
    g: &GlobalArgs,
    a: &TrainArgs,
    resume: Option<&Path>,
) -> Result<TrainOutcome, CliError> {
    let ckpt = match resume {
        Some(p) => {
            let c = Checkpoint::<T>::load(p).map_err(CliError::usage)?;
            // the original run's settings sit under the config file and flags
            s.underlay(&c.extra);
            Some(c)
        }
        None => None,
    };
    let preset = s.pick("preset", a.preset, Preset::SyntheticDesk)?;
    let data = s.require_path("data", a.data.as_deref(), "--data")?;
    let out = s.require_path("out", a.out.as_deref(), "--out")?;
    let seed = s.pick("seed", g.seed, 0u64)?;
    let iters = s.pick("iters", a.iters, 500u64)?;
    let batch = s.pick("batch", a.batch, 4usize)?;
    let patch = s.pick("patch", a.patch, 64usize)?;
    let checkpoint_every = s.pick("checkpoint_every", a.checkpoint_every, 100u64)?;
    let report_every = s.pick("report_every", a.report_every, 1u64)?;
    let clip = s.pick_opt("clip", a.clip)?;
    let ablation = s.pick("ablation", a.ablation, AblationRow::Full)?;

    let mut manifest = match preset {
        Preset::SyntheticDesk => DatasetManifest::synthetic(&data, patch, seed),
        Preset::RealDesk => {
            let gt = s.require_path("gt", a.gt.as_deref(), "--gt")?;
            DatasetManifest::paired(&data, gt, patch, seed)
        }
    };
    manifest.sigma_low = s.pick("sigma_low", a.sigma_low, manifest.sigma_low)?;
    manifest.sigma_high = s.pick("sigma_high", a.sigma_high, manifest.sigma_high)?;
    manifest.augment = s.pick("augment", None, manifest.augment)?;
    manifest.fixed_noise = s.pick("fixed_noise", None, manifest.fixed_noise)?;
    let dataset = Dataset::open(manifest).map_err(CliError::usage)?;

    let cfg = match &ckpt {
        Some(c) => c.cfg.clone(),
        None => {
            let base = ModelConfig::desk(dataset.channels())
                .read_kv(&s.file, "model.")
                .map_err(CliError::usage)?;
            ablation_variant(&base, ablation)
        }
    };
    cfg.validate().map_err(CliError::usage)?;
    cfg.write_kv(&mut s.record, "model.");

    let mut loss = LossConfig::for_model(&cfg);
    loss.charbonnier_eps = s.pick("loss.charbonnier_eps", None, loss.charbonnier_eps)?;
    if let Some(w) = s.file.get_list("loss.scale_weights").map_err(CliError::usage)? {
        loss.scale_weights = w;
    }
    s.record.set("loss.scale_weights", join(&loss.scale_weights));

    let preset_schedule = match preset {
        Preset::SyntheticDesk => Schedule::step_half_default(),
        Preset::RealDesk => Schedule::cosine(2e-4, 1e-6, iters),
    };
    let mut schedule = preset_schedule.read_kv(&s.file, "schedule.").map_err(CliError::usage)?;
    if let Some(lr) = s.pick_opt("lr", a.lr)? {
        schedule.base_lr = lr;
    }
    schedule.validate().map_err(CliError::usage)?;
    schedule.write_kv(&mut s.record, "schedule.");

    let mut trainer = match ckpt {
        Some(c) => {
            let model = c.model().map_err(CliError::runtime)?;
            Trainer::resume(model, c.adam, c.iteration, dataset, loss, schedule, batch)
        }
        None => {
            let model = Model::<T>::build(&cfg, seed).map_err(CliError::usage)?;
            Trainer::new(model, dataset, loss, schedule, batch)
        }
    }
    .map_err(CliError::usage)?;
    trainer.clip = clip;
    if trainer.iteration > iters {
        return Err(CliError::Usage(format!(
            "checkpoint is at iteration {}, past --iters {iters}",
            trainer.iteration
        )));
    }

    create_dir(&out)?;
    s.save_record(&out.join(RESOLVED_CONFIG))?;
    let log_path = out.join("train_log.csv");
    let io = |e: std::io::Error| madnet::Error::io(&log_path, e);
    let append = resume.is_some() && log_path.is_file();
    let mut log_file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&log_path)
        .map_err(|e| CliError::runtime(io(e)))?;
    if !append {
        writeln!(log_file, "{}", TrainingLog::CSV_HEADER).map_err(|e| CliError::runtime(io(e)))?;
    }

    let record = s.record.clone();
    let save = |tr: &Trainer<T>, path: &Path| {
        let mut c = tr.checkpoint();
        c.rng_seed = seed;
        c.extra = record.clone();
        c.save(path)
    };
    log::info!(
        "training {} parameters for {} iterations from iteration {}",
        trainer.model.params.numel(),
        iters,
        trainer.iteration
    );
    let remaining = iters - trainer.iteration;
    let log = trainer
        .run_with(remaining, report_every, |tr, row| {
            let done = tr.iteration;
            if report_every > 0 && (row.iter % report_every == 0 || done == iters) {
                append_csv(&mut log_file, row).map_err(io)?;
                log::debug!("iter {} lr {:.3e} loss {:.6}", row.iter, row.lr, row.loss_total);
            }
            if checkpoint_every > 0 && done % checkpoint_every == 0 && done < iters {
                let path = out.join(checkpoint_name(done));
                save(tr, &path)?;
                log::info!("iteration {done}: loss {:.6}, wrote {}", row.loss_total, path.display());
            }
            Ok(())
        })
        .map_err(CliError::runtime)?;
    log_file.flush().map_err(|e| CliError::runtime(io(e)))?;
    let final_checkpoint = out.join("final.madn");
    save(&trainer, &final_checkpoint).map_err(CliError::runtime)?;
    log::info!("finished at iteration {}, wrote {}", trainer.iteration, final_checkpoint.display());
    Ok(TrainOutcome {
        out,
        final_checkpoint,
        log_path,
        log,
        iteration: trainer.iteration,
    })
}
