use std::fmt;
use std::str::FromStr;

use crate::blocks::BlockToggles;
use crate::error::{Error, Result};
use crate::kv::{join, KvMap};

/// Architecture hyperparameters plus every ablation switch.
///
/// `use_msl` and `use_mfl` select the supervision terms; they live here so a
/// single ablation row fully describes an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub base_channels: usize,
    pub stages: usize,
    pub blocks_per_stage: Vec<usize>,
    pub heads_per_stage: Vec<usize>,
    pub gff_ratio: f64,
    pub toggles: BlockToggles,
    pub use_msi: bool,
    pub use_gffb: bool,
    pub use_msl: bool,
    pub use_mfl: bool,
    pub in_channels: usize,
}

impl ModelConfig {
    /// Small configuration that trains on one CPU core in minutes.
    pub fn desk(in_channels: usize) -> Self {
        ModelConfig {
            base_channels: 16,
            stages: 4,
            blocks_per_stage: vec![1; 4],
            heads_per_stage: vec![1, 1, 2, 2],
            gff_ratio: 2.0,
            toggles: BlockToggles::default(),
            use_msi: true,
            use_gffb: true,
            use_msl: true,
            use_mfl: true,
            in_channels,
        }
    }

    /// Channel width of stage `i`.
    pub fn channels(&self, i: usize) -> usize {
        self.base_channels << i
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.stages == 0 {
            return bad("stages must be at least 1".into());
        }
        if self.stages > 16 {
            return bad(format!("stages = {} is too deep", self.stages));
        }
        if self.base_channels == 0 {
            return bad("base_channels must be positive".into());
        }
        if self.base_channels.checked_mul(1 << (self.stages - 1)).is_none() {
            return bad("channel width overflows".into());
        }
        if self.blocks_per_stage.len() != self.stages {
            return bad(format!(
                "blocks_per_stage has {} entries, expected {}",
                self.blocks_per_stage.len(),
                self.stages
            ));
        }
        if self.heads_per_stage.len() != self.stages {
            return bad(format!(
                "heads_per_stage has {} entries, expected {}",
                self.heads_per_stage.len(),
                self.stages
            ));
        }
        for (i, &h) in self.heads_per_stage.iter().enumerate() {
            if h == 0 || self.channels(i) % h != 0 {
                return bad(format!("stage {i}: {} channels not divisible into {h} heads", self.channels(i)));
            }
        }
        if !(self.gff_ratio > 0.0) || !self.gff_ratio.is_finite() {
            return bad(format!("gff_ratio must be positive, got {}", self.gff_ratio));
        }
        if !matches!(self.in_channels, 1 | 3) {
            return bad(format!("in_channels must be 1 or 3, got {}", self.in_channels));
        }
        if !self.use_msl && !self.use_mfl {
            return bad("both loss terms disabled".into());
        }
        Ok(())
    }

    pub fn write_kv(&self, map: &mut KvMap, prefix: &str) {
        let t = &self.toggles;
        map.set(&format!("{prefix}base_channels"), self.base_channels);
        map.set(&format!("{prefix}stages"), self.stages);
        map.set(&format!("{prefix}blocks_per_stage"), join(&self.blocks_per_stage));
        map.set(&format!("{prefix}heads_per_stage"), join(&self.heads_per_stage));
        map.set(&format!("{prefix}gff_ratio"), self.gff_ratio);
        map.set(&format!("{prefix}in_channels"), self.in_channels);
        map.set(&format!("{prefix}use_msi"), self.use_msi);
        map.set(&format!("{prefix}use_gffb"), self.use_gffb);
        map.set(&format!("{prefix}use_msl"), self.use_msl);
        map.set(&format!("{prefix}use_mfl"), self.use_mfl);
        map.set(&format!("{prefix}use_aseb"), t.use_aseb);
        map.set(&format!("{prefix}use_afeb"), t.use_afeb);
        map.set(&format!("{prefix}use_separation"), t.use_separation);
        map.set(&format!("{prefix}use_enhancement"), t.use_enhancement);
    }

    /// Overrides the fields present under `prefix`, then validates.
    pub fn read_kv(mut self, map: &KvMap, prefix: &str) -> Result<Self> {
        let k = |name: &str| format!("{prefix}{name}");
        macro_rules! field {
            ($slot:expr, $name:literal) => {
                if let Some(v) = map.get_parsed(&k($name))? {
                    $slot = v;
                }
            };
        }
        field!(self.base_channels, "base_channels");
        field!(self.gff_ratio, "gff_ratio");
        field!(self.in_channels, "in_channels");
        field!(self.use_msi, "use_msi");
        field!(self.use_gffb, "use_gffb");
        field!(self.use_msl, "use_msl");
        field!(self.use_mfl, "use_mfl");
        field!(self.toggles.use_aseb, "use_aseb");
        field!(self.toggles.use_afeb, "use_afeb");
        field!(self.toggles.use_separation, "use_separation");
        field!(self.toggles.use_enhancement, "use_enhancement");
        if let Some(s) = map.get_parsed::<usize>(&k("stages"))? {
            if s != self.stages {
                // keep per-stage lists consistent when only the depth is given
                self.blocks_per_stage.resize(s, *self.blocks_per_stage.last().unwrap_or(&1));
                self.heads_per_stage.resize(s, *self.heads_per_stage.last().unwrap_or(&1));
                self.stages = s;
            }
        }
        if let Some(v) = map.get_list(&k("blocks_per_stage"))? {
            self.blocks_per_stage = v;
        }
        if let Some(v) = map.get_list(&k("heads_per_stage"))? {
            self.heads_per_stage = v;
        }
        self.validate()?;
        Ok(self)
    }
}

/// Rows of the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AblationRow {
    Full,
    NoMsi,
    NoGffb,
    NoMsiGffb,
    NoMsl,
    NoMfl,
    NoAseb,
    NoAfeb,
    NoAsebAfeb,
    AfebNoSep,
    AfebNoEnh,
    BothNoSep,
    BothNoEnh,
}

impl AblationRow {
    pub const ALL: [AblationRow; 13] = [
        AblationRow::Full,
        AblationRow::NoMsi,
        AblationRow::NoGffb,
        AblationRow::NoMsiGffb,
        AblationRow::NoMsl,
        AblationRow::NoMfl,
        AblationRow::NoAseb,
        AblationRow::NoAfeb,
        AblationRow::NoAsebAfeb,
        AblationRow::AfebNoSep,
        AblationRow::AfebNoEnh,
        AblationRow::BothNoSep,
        AblationRow::BothNoEnh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationRow::Full => "full",
            AblationRow::NoMsi => "no_msi",
            AblationRow::NoGffb => "no_gffb",
            AblationRow::NoMsiGffb => "no_msi_gffb",
            AblationRow::NoMsl => "no_msl",
            AblationRow::NoMfl => "no_mfl",
            AblationRow::NoAseb => "no_aseb",
            AblationRow::NoAfeb => "no_afeb",
            AblationRow::NoAsebAfeb => "no_aseb_afeb",
            AblationRow::AfebNoSep => "afeb_no_sep",
            AblationRow::AfebNoEnh => "afeb_no_enh",
            AblationRow::BothNoSep => "both_no_sep",
            AblationRow::BothNoEnh => "both_no_enh",
        }
    }
}

impl fmt::Display for AblationRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationRow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationRow::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = AblationRow::ALL.iter().map(|r| r.name()).collect();
                Error::Config(format!("unknown ablation row {s:?}; expected one of {}", known.join(", ")))
            })
    }
}

/// Copy of `cfg` with the switches of `row` cleared.
///
/// The ASEB/AFEB columns follow the table literally: the two `afeb_*` rows
/// clear both sub-block flags as well as Sep or Enh.
pub fn ablation_variant(cfg: &ModelConfig, row: AblationRow) -> ModelConfig {
    let mut c = cfg.clone();
    let t = &mut c.toggles;
    match row {
        AblationRow::Full => {}
        AblationRow::NoMsi => c.use_msi = false,
        AblationRow::NoGffb => c.use_gffb = false,
        AblationRow::NoMsiGffb => {
            c.use_msi = false;
            c.use_gffb = false;
        }
        AblationRow::NoMsl => c.use_msl = false,
        AblationRow::NoMfl => c.use_mfl = false,
        AblationRow::NoAseb => t.use_aseb = false,
        AblationRow::NoAfeb => t.use_afeb = false,
        AblationRow::NoAsebAfeb => {
            t.use_aseb = false;
            t.use_afeb = false;
        }
        AblationRow::AfebNoSep => {
            t.use_aseb = false;
            t.use_afeb = false;
            t.use_separation = false;
        }
        AblationRow::AfebNoEnh => {
            t.use_aseb = false;
            t.use_afeb = false;
            t.use_enhancement = false;
        }
        AblationRow::BothNoSep => t.use_separation = false,
        AblationRow::BothNoEnh => t.use_enhancement = false,
    }
    c
}
