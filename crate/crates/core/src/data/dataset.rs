use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{DatasetManifest, DatasetMode};
use super::{add_awgn, load_image, mix_seed, patch_corner, Dihedral, ImageBuffer};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Element, Tensor};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

/// One training example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub clean: ImageBuffer,
    pub noisy: ImageBuffer,
    /// Noise level on the 0–255 scale; NaN for paired data.
    pub sigma: f64,
}

/// Images held in memory plus the rules for drawing samples from them.
///
/// Every sample is a pure function of the manifest, the iteration and the
/// index within the batch.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    clean: Vec<ImageBuffer>,
    noisy: Option<Vec<ImageBuffer>>,
}

/// Image files directly inside `dir` (or `dir` itself if it is a file), sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no images in {}", dir.display())));
    }
    Ok(files)
}

impl Dataset {
    /// Loads every image the manifest refers to.
    pub fn open(manifest: DatasetManifest) -> Result<Self> {
        manifest.validate()?;
        match &manifest.mode {
            DatasetMode::Synthetic { clean } => {
                let clean = list_images(clean)?
                    .iter()
                    .map(|p| load_image(p))
                    .collect::<Result<_>>()?;
                Self::from_images(manifest, clean, None)
            }
            DatasetMode::Paired { noisy, gt } => {
                let gt_files = list_images(gt)?;
                let mut clean = Vec::new();
                let mut noisy_imgs = Vec::new();
                for g in &gt_files {
                    let n = noisy.join(g.file_name().unwrap());
                    if !n.is_file() {
                        return Err(Error::Config(format!("no noisy counterpart {} for {}", n.display(), g.display())));
                    }
                    clean.push(load_image(g)?);
                    noisy_imgs.push(load_image(&n)?);
                }
                Self::from_images(manifest, clean, Some(noisy_imgs))
            }
        }
    }

    /// Dataset over images already in memory; `noisy` switches to paired sampling.
    pub fn from_images(
        manifest: DatasetManifest,
        clean: Vec<ImageBuffer>,
        noisy: Option<Vec<ImageBuffer>>,
    ) -> Result<Self> {
        manifest.validate()?;
        if clean.is_empty() {
            return Err(Error::Config("dataset is empty".into()));
        }
        let channels = clean[0].channels;
        for (i, img) in clean.iter().enumerate() {
            if img.channels != channels {
                return Err(Error::Config(format!(
                    "image {i} has {} channels, expected {channels}",
                    img.channels
                )));
            }
            if img.width < manifest.patch || img.height < manifest.patch {
                return Err(Error::Config(format!(
                    "image {i} ({}x{}) is smaller than patch {}",
                    img.height, img.width, manifest.patch
                )));
            }
        }
        if let Some(n) = &noisy {
            if n.len() != clean.len() {
                return Err(Error::Config("noisy and clean lists differ in length".into()));
            }
            for (i, (a, b)) in clean.iter().zip(n).enumerate() {
                if (a.width, a.height, a.channels) != (b.width, b.height, b.channels) {
                    return Err(Error::Config(format!("pair {i} extents differ")));
                }
            }
        }
        Ok(Dataset { manifest, clean, noisy })
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.clean[0].channels
    }

    pub fn images(&self) -> &[ImageBuffer] {
        &self.clean
    }

    fn draw_sigma(&self, rng: &mut ChaCha8Rng) -> f64 {
        let (lo, hi) = (self.manifest.sigma_low, self.manifest.sigma_high);
        // hi − u·(hi − lo) with u in [0, 1) lies in (lo, hi]
        hi - rng.random::<f64>() * (hi - lo)
    }

    /// Sample `index` of iteration `iteration`.
    pub fn sample(&self, iteration: u64, index: u64) -> Result<Sample> {
        let m = &self.manifest;
        let key = mix_seed(&[m.seed, iteration, index]);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let img_idx = rng.random_range(0..self.clean.len());
        let clean_full = &self.clean[img_idx];
        let (top, left) = patch_corner(clean_full.height, clean_full.width, m.patch, rng.random())?;
        let transform = if m.augment {
            Dihedral::from_index(rng.random_range(0..8))
        } else {
            Dihedral::IDENTITY
        };
        let crop = |img: &ImageBuffer| img.crop(top, left, m.patch, m.patch);
        let clean = crop(clean_full)?;
        let (noisy, sigma) = match &self.noisy {
            Some(n) => (crop(&n[img_idx])?, f64::NAN),
            None if m.fixed_noise => {
                let mut per_image = ChaCha8Rng::seed_from_u64(mix_seed(&[m.seed, img_idx as u64]));
                let sigma = self.draw_sigma(&mut per_image);
                let field = add_awgn(clean_full, sigma, per_image.random());
                (crop(&field)?, sigma)
            }
            None => {
                let sigma = self.draw_sigma(&mut rng);
                (add_awgn(&clean, sigma, rng.random()), sigma)
            }
        };
        Ok(Sample {
            clean: transform.apply(&clean)?,
            noisy: transform.apply(&noisy)?,
            sigma,
        })
    }

    /// `(noisy, clean)` tensors of shape `batch×C×P×P` for one iteration.
    pub fn batch<T: Element>(&self, iteration: u64, batch: usize) -> Result<(Tensor<T>, Tensor<T>)> {
        let samples = par::map_range(batch, |i| self.sample(iteration, i as u64));
        let samples: Vec<Sample> = samples.into_iter().collect::<Result<_>>()?;
        let p = self.manifest.patch;
        let c = self.channels();
        let mut noisy = Vec::with_capacity(batch * c * p * p);
        let mut clean = Vec::with_capacity(batch * c * p * p);
        for s in &samples {
            noisy.extend_from_slice(&s.noisy.data);
            clean.extend_from_slice(&s.clean.data);
        }
        let shape = [batch, c, p, p];
        Ok((Tensor::from_f64(&shape, &noisy)?, Tensor::from_f64(&shape, &clean)?))
    }
}
