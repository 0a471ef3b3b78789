use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kv::KvMap;

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetMode {
    /// Clean images; noise is synthesized per sample.
    Synthetic { clean: PathBuf },
    /// `(noisy, gt)` files matched by basename.
    Paired { noisy: PathBuf, gt: PathBuf },
}

/// Where samples come from and how they are drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub mode: DatasetMode,
    /// Noise levels are drawn from `(sigma_low, sigma_high]` on the 0–255
    /// scale; equal bounds give a fixed level.
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub patch: usize,
    pub seed: u64,
    pub augment: bool,
    /// Draw one noise field per image and reuse it for every sample instead
    /// of fresh noise per sample.
    pub fixed_noise: bool,
}

impl DatasetManifest {
    /// Blind synthetic training over `σ ∈ (0, 50]`.
    pub fn synthetic(clean: impl Into<PathBuf>, patch: usize, seed: u64) -> Self {
        DatasetManifest {
            mode: DatasetMode::Synthetic { clean: clean.into() },
            sigma_low: 0.0,
            sigma_high: 50.0,
            patch,
            seed,
            augment: true,
            fixed_noise: false,
        }
    }

    pub fn paired(noisy: impl Into<PathBuf>, gt: impl Into<PathBuf>, patch: usize, seed: u64) -> Self {
        DatasetManifest {
            mode: DatasetMode::Paired {
                noisy: noisy.into(),
                gt: gt.into(),
            },
            ..Self::synthetic(PathBuf::new(), patch, seed)
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma_low = sigma;
        self.sigma_high = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 {
            return Err(Error::Config("patch must be positive".into()));
        }
        if let DatasetMode::Synthetic { .. } = self.mode {
            let (lo, hi) = (self.sigma_low, self.sigma_high);
            if !(0.0 <= lo && lo <= hi && hi <= 50.0 && hi > 0.0) {
                return Err(Error::Config(format!(
                    "sigma range ({lo}, {hi}] must satisfy 0 <= low <= high <= 50 and high > 0"
                )));
            }
        }
        Ok(())
    }

    /// Checks that the patch can feed a pyramid with `levels` levels.
    pub fn check_levels(&self, levels: usize) -> Result<()> {
        let f = 1usize << levels.saturating_sub(1);
        if self.patch % f != 0 {
            return Err(Error::Config(format!(
                "patch {} is not divisible by 2^{} = {f}",
                self.patch,
                levels - 1
            )));
        }
        Ok(())
    }

    pub fn write_kv(&self, map: &mut KvMap, prefix: &str) {
        let k = |n: &str| format!("{prefix}{n}");
        match &self.mode {
            DatasetMode::Synthetic { clean } => {
                map.set(&k("mode"), "synthetic");
                map.set(&k("clean"), clean.display());
            }
            DatasetMode::Paired { noisy, gt } => {
                map.set(&k("mode"), "paired");
                map.set(&k("noisy"), noisy.display());
                map.set(&k("gt"), gt.display());
            }
        }
        map.set(&k("sigma_low"), self.sigma_low);
        map.set(&k("sigma_high"), self.sigma_high);
        map.set(&k("patch"), self.patch);
        map.set(&k("seed"), self.seed);
        map.set(&k("augment"), self.augment);
        map.set(&k("fixed_noise"), self.fixed_noise);
    }

    /// Reads a manifest; relative paths resolve against `base`.
    pub fn read_kv(map: &KvMap, prefix: &str, base: &Path) -> Result<Self> {
        let k = |n: &str| format!("{prefix}{n}");
        let path = |n: &str| -> Result<PathBuf> { Ok(base.join(map.require::<String>(&k(n))?)) };
        let mode_name: String = map.get_parsed(&k("mode"))?.unwrap_or_else(|| "synthetic".into());
        let mode = match mode_name.as_str() {
            "synthetic" => DatasetMode::Synthetic { clean: path("clean")? },
            "paired" => DatasetMode::Paired {
                noisy: path("noisy")?,
                gt: path("gt")?,
            },
            other => return Err(Error::Config(format!("unknown dataset mode {other:?}"))),
        };
        let d = Self::synthetic(PathBuf::new(), 128, 0);
        let m = DatasetManifest {
            mode,
            sigma_low: map.get_parsed(&k("sigma_low"))?.unwrap_or(d.sigma_low),
            sigma_high: map.get_parsed(&k("sigma_high"))?.unwrap_or(d.sigma_high),
            patch: map.get_parsed(&k("patch"))?.unwrap_or(d.patch),
            seed: map.get_parsed(&k("seed"))?.unwrap_or(d.seed),
            augment: map.get_parsed(&k("augment"))?.unwrap_or(d.augment),
            fixed_noise: map.get_parsed(&k("fixed_noise"))?.unwrap_or(d.fixed_noise),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::read_kv(&KvMap::load(path)?, "", base)
    }
}
