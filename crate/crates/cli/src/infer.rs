use std::path::{Path, PathBuf};

use madnet::data::{add_awgn, list_images, load_image, mix_seed, save_image, ImageBuffer};
use madnet::kv::join;
use madnet::metrics::{psnr, ssim};
use madnet::model::Model;
use madnet::trainer::{checkpoint_dtype, Checkpoint};
use madnet::{no_grad, DType, Element};

use crate::pad::reflect_pad;
use crate::{begin, create_dir, require_file, CliError, DenoiseArgs, EvalArgs, GlobalArgs, RESOLVED_CONFIG};

/// Noise levels of the synthetic benchmark tables.
pub const DEFAULT_EVAL_SIGMAS: [f64; 4] = [15.0, 25.0, 30.0, 50.0];

/// Finest-scale restoration of an image of any extent.
///
/// The image is reflect-padded at the bottom and right to a multiple of
/// `2^(S−1)`, restored, and cropped back. Values are not clamped.
pub fn denoise_image<T: Element>(model: &Model<T>, img: &ImageBuffer) -> madnet::Result<ImageBuffer> {
    if img.channels != model.cfg.in_channels {
        return Err(madnet::Error::Config(format!(
            "image has {} channels, model expects {}",
            img.channels, model.cfg.in_channels
        )));
    }
    let padded = reflect_pad(img, 1 << (model.cfg.stages - 1));
    let out = no_grad(|| model.forward_image(&padded.to_tensor::<T>()))?;
    ImageBuffer::from_tensor(&out.restored[0])?.crop(0, 0, img.height, img.width)
}

/// Settings and metrics of one `denoise` call.
#[derive(Debug)]
pub struct DenoiseOutcome {
    pub output: PathBuf,
    pub record: PathBuf,
    /// `(PSNR, SSIM)` of the written file against the reference.
    pub metrics: Option<(f64, f64)>,
}

fn checked_dtype(g: &GlobalArgs, path: &Path) -> Result<DType, CliError> {
    let stored = checkpoint_dtype(path).map_err(CliError::runtime)?;
    match g.dtype {
        Some(d) if d != stored => Err(CliError::Usage(format!(
            "--dtype {d} conflicts with the {stored} checkpoint {}",
            path.display()
        ))),
        _ => Ok(stored),
    }
}

fn load_model<T: Element>(path: &Path) -> Result<Model<T>, CliError> {
    Checkpoint::<T>::load(path)
        .and_then(|c| c.model())
        .map_err(CliError::runtime)
}

/// PSNR and SSIM between two images on the unit intensity scale.
fn image_metrics(a: &ImageBuffer, b: &ImageBuffer) -> madnet::Result<(f64, f64)> {
    let (ta, tb) = (a.to_tensor::<f64>(), b.to_tensor::<f64>());
    Ok((psnr(&ta, &tb, 1.0)?, ssim(&ta, &tb)?))
}

pub fn cmd_denoise(g: &GlobalArgs, a: &DenoiseArgs) -> Result<DenoiseOutcome, CliError> {
    let mut s = begin("denoise", g)?;
    require_file(&a.checkpoint, "--checkpoint")?;
    require_file(&a.input, "--input")?;
    if let Some(r) = &a.reference {
        require_file(r, "--reference")?;
    }
    let checkpoint = s.require_path("checkpoint", Some(&a.checkpoint), "--checkpoint")?;
    let input = s.require_path("input", Some(&a.input), "--input")?;
    let output = s.require_path("output", Some(&a.output), "--output")?;
    let reference = s.pick_path("reference", a.reference.as_deref())?;
    let dtype = checked_dtype(g, &checkpoint)?;
    s.record.set("dtype", dtype);

    let img = load_image(&input).map_err(CliError::runtime)?;
    let restored = match dtype {
        DType::F32 => denoise_image(&load_model::<f32>(&checkpoint)?, &img),
        DType::F64 => denoise_image(&load_model::<f64>(&checkpoint)?, &img),
    }
    .map_err(CliError::runtime)?;
    if let Some(dir) = output.parent() {
        create_dir(dir)?;
    }
    save_image(&restored, &output).map_err(CliError::runtime)?;
    let record = output.with_extension("resolved.txt");
    s.save_record(&record)?;

    let metrics = match &reference {
        Some(r) => {
            let written = load_image(&output).map_err(CliError::runtime)?;
            let clean = load_image(r).map_err(CliError::runtime)?;
            let m = image_metrics(&written, &clean).map_err(CliError::runtime)?;
            Some(m)
        }
        None => None,
    };
    Ok(DenoiseOutcome { output, record, metrics })
}

/// Mean metrics at one noise level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRow {
    pub sigma: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
    pub images: usize,
}

impl EvalTable {
    /// One column pair per noise level, PSNR then SSIM.
    pub fn table(&self) -> String {
        let mut head = String::new();
        let mut sub = String::new();
        let mut vals = String::new();
        for r in &self.rows {
            head.push_str(&format!("{:^17}", format!("sigma = {}", r.sigma)));
            sub.push_str(&format!("{:>8} {:>8}", "PSNR", "SSIM"));
            vals.push_str(&format!("{:>8.2} {:>8.4}", r.psnr, r.ssim));
        }
        format!("{}\n{sub}\n{vals}\n", head.trim_end())
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("sigma,psnr,ssim\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.sigma, r.psnr, r.ssim));
        }
        s
    }
}

fn eval_typed<T: Element>(
    model: &Model<T>,
    images: &[ImageBuffer],
    sigmas: &[f64],
    seed: u64,
) -> madnet::Result<Vec<EvalRow>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let (mut p, mut q) = (0.0, 0.0);
            for (i, clean) in images.iter().enumerate() {
                let noisy = if sigma > 0.0 {
                    add_awgn(clean, sigma, mix_seed(&[seed, i as u64, sigma.to_bits()]))
                } else {
                    clean.clone()
                };
                let restored = denoise_image(model, &noisy)?.clamped();
                let (a, b) = image_metrics(&restored, clean)?;
                p += a;
                q += b;
            }
            let n = images.len() as f64;
            Ok(EvalRow {
                sigma,
                psnr: p / n,
                ssim: q / n,
            })
        })
        .collect()
}

pub fn cmd_eval(g: &GlobalArgs, a: &EvalArgs) -> Result<EvalTable, CliError> {
    let mut s = begin("eval", g)?;
    require_file(&a.checkpoint, "--checkpoint")?;
    let checkpoint = s.require_path("checkpoint", Some(&a.checkpoint), "--checkpoint")?;
    let data = s.require_path("data", Some(&a.data), "--data")?;
    let out = s.require_path("out", Some(&a.out), "--out")?;
    let seed = s.pick("seed", g.seed, 0u64)?;
    let sigmas = match &a.sigmas {
        Some(v) => v.clone(),
        None => s
            .file
            .get_list("sigmas")
            .map_err(CliError::usage)?
            .unwrap_or_else(|| DEFAULT_EVAL_SIGMAS.to_vec()),
    };
    if sigmas.is_empty() || sigmas.iter().any(|&v| !(0.0..=255.0).contains(&v)) {
        return Err(CliError::Usage(format!("--sigmas must be values in [0, 255], got {sigmas:?}")));
    }
    s.record.set("sigmas", join(&sigmas));
    let dtype = checked_dtype(g, &checkpoint)?;
    s.record.set("dtype", dtype);

    let files = list_images(&data).map_err(CliError::usage)?;
    let images = files
        .iter()
        .map(|p| load_image(p))
        .collect::<madnet::Result<Vec<_>>>()
        .map_err(CliError::runtime)?;
    let rows = match dtype {
        DType::F32 => eval_typed(&load_model::<f32>(&checkpoint)?, &images, &sigmas, seed),
        DType::F64 => eval_typed(&load_model::<f64>(&checkpoint)?, &images, &sigmas, seed),
    }
    .map_err(CliError::runtime)?;
    let table = EvalTable {
        rows,
        images: images.len(),
    };
    create_dir(&out)?;
    s.save_record(&out.join(RESOLVED_CONFIG))?;
    let csv = out.join("eval.csv");
    std::fs::write(&csv, table.csv()).map_err(|e| CliError::runtime(madnet::Error::io(&csv, e)))?;
    Ok(table)
}
