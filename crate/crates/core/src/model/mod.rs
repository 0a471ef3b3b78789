//! The full multi-scale encoder-decoder denoiser.

mod config;
mod pyramid;

pub use config::{ablation_variant, AblationRow, ModelConfig};
pub use pyramid::make_pyramid;

use crate::blocks::{init_rng, Builder, Conv, Ddml, Gffb, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug)]
struct EncoderStage {
    /// 3×3 stem on the pyramid level; stage 0 always has one.
    shallow: Option<Conv>,
    /// Stride-2 conv from the previous stage.
    down: Option<Conv>,
    /// 1×1 fusion of `[down, shallow]`.
    fuse: Option<Conv>,
    ddml: Vec<Ddml>,
}

#[derive(Clone, Debug)]
struct DecoderStage {
    up: Conv,
    reduce: Conv,
    ddml: Vec<Ddml>,
}

/// Residuals `s_i` and restored images `x̂_i = x_i + s_i`, finest first.
#[derive(Clone, Debug)]
pub struct ModelOutput<T: Element> {
    pub residuals: Vec<Tensor<T>>,
    pub restored: Vec<Tensor<T>>,
}

/// Network structure plus its parameters.
#[derive(Clone, Debug)]
pub struct Model<T: Element = f32> {
    pub cfg: ModelConfig,
    pub params: ParamStore<T>,
    encoder: Vec<EncoderStage>,
    gffb: Option<Gffb>,
    /// `decoder[i]` produces stage `i` for `i < S − 1`.
    decoder: Vec<DecoderStage>,
    heads: Vec<Conv>,
}

impl<T: Element> Model<T> {
    /// Builds the network with parameters drawn from `seed`.
    ///
    /// Output heads start at zero, so a fresh model returns its input.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut rng = init_rng(seed);
        let mut b = Builder::new(&mut params, &mut rng);
        let s = cfg.stages;
        let cin = cfg.in_channels;
        let ddmls = |b: &mut Builder<'_, T>, i: usize| -> Result<Vec<Ddml>> {
            (0..cfg.blocks_per_stage[i])
                .map(|j| {
                    Ddml::build(
                        &mut b.sub("ddml").sub(j),
                        cfg.channels(i),
                        cfg.heads_per_stage[i],
                        cfg.gff_ratio,
                        cfg.toggles,
                    )
                })
                .collect()
        };

        let mut encoder = Vec::with_capacity(s);
        for i in 0..s {
            let mut e = b.sub(format!("enc.{i}"));
            let c = cfg.channels(i);
            let stage = if i == 0 {
                EncoderStage {
                    shallow: Some(e.conv("shallow", cin, c, 3, 1)?),
                    down: None,
                    fuse: None,
                    ddml: ddmls(&mut e, i)?,
                }
            } else {
                let down = e.conv_with("down", cfg.channels(i - 1), c, 3, 1, 2, false)?;
                let (shallow, fuse) = if cfg.use_msi {
                    (Some(e.conv("shallow", cin, c, 3, 1)?), Some(e.conv("fuse", 2 * c, c, 1, 1)?))
                } else {
                    (None, None)
                };
                EncoderStage {
                    shallow,
                    down: Some(down),
                    fuse,
                    ddml: ddmls(&mut e, i)?,
                }
            };
            encoder.push(stage);
        }

        let gffb = if cfg.use_gffb && s > 1 {
            let channels: Vec<usize> = (0..s).map(|i| cfg.channels(i)).collect();
            Some(Gffb::build(&mut b.sub("gffb"), &channels, &cfg.heads_per_stage)?)
        } else {
            None
        };

        let mut decoder = Vec::with_capacity(s.saturating_sub(1));
        for i in 0..s - 1 {
            let mut d = b.sub(format!("dec.{i}"));
            let c = cfg.channels(i);
            decoder.push(DecoderStage {
                up: d.conv("up", 2 * c, c, 1, 1)?,
                reduce: d.conv("reduce", 2 * c, c, 1, 1)?,
                ddml: ddmls(&mut d, i)?,
            });
        }

        let heads = (0..s)
            .map(|i| b.sub("head").conv_zero(&i.to_string(), cfg.channels(i), cin, 3))
            .collect::<Result<_>>()?;

        Ok(Model {
            cfg: cfg.clone(),
            params,
            encoder,
            gffb,
            decoder,
            heads,
        })
    }

    /// Checks that `pyramid` has one level per stage with halving extents.
    pub fn check_pyramid(&self, pyramid: &[Tensor<T>]) -> Result<()> {
        const OP: &str = "model";
        let s = self.cfg.stages;
        if pyramid.len() != s {
            return Err(Error::contract(OP, format!("expected {s} pyramid levels, got {}", pyramid.len())));
        }
        let x0 = &pyramid[0];
        if x0.rank() != 4 {
            return Err(Error::RankMismatch {
                op: OP,
                expected: 4,
                got: x0.rank(),
            });
        }
        let (n, h, w) = (x0.dim(0), x0.dim(2), x0.dim(3));
        let f = 1usize << (s - 1);
        if h % f != 0 || w % f != 0 {
            return Err(Error::contract(OP, format!("{h}x{w} is not divisible by {f}")));
        }
        for (i, x) in pyramid.iter().enumerate() {
            let want = [n, self.cfg.in_channels, h >> i, w >> i];
            if x.shape() != want {
                return Err(Error::contract(
                    OP,
                    format!("level {i} has shape {:?}, expected {want:?}", x.shape()),
                ));
            }
        }
        Ok(())
    }

    pub fn forward(&self, pyramid: &[Tensor<T>]) -> Result<ModelOutput<T>> {
        self.forward_with(&self.params, pyramid)
    }

    /// Forward pass reading parameters from `ps`, which must share names and
    /// shapes with `self.params`.
    pub fn forward_with(&self, ps: &ParamStore<T>, pyramid: &[Tensor<T>]) -> Result<ModelOutput<T>> {
        self.check_pyramid(pyramid)?;
        let s = self.cfg.stages;
        let run = |blocks: &[Ddml], mut f: Tensor<T>| -> Result<Tensor<T>> {
            for blk in blocks {
                f = blk.forward(ps, &f)?;
            }
            Ok(f)
        };

        let mut skips: Vec<Tensor<T>> = Vec::with_capacity(s);
        for (i, st) in self.encoder.iter().enumerate() {
            let f = match (&st.down, &st.shallow, &st.fuse) {
                (None, Some(sh), _) => sh.forward(ps, &pyramid[0])?,
                (Some(down), sh, fuse) => {
                    let d = down.forward(ps, &skips[i - 1])?;
                    match (sh, fuse) {
                        (Some(sh), Some(fuse)) => {
                            let x = sh.forward(ps, &pyramid[i])?;
                            fuse.forward(ps, &Tensor::concat(&[d, x], 1)?)?
                        }
                        _ => d,
                    }
                }
                (None, None, _) => unreachable!("stage without input"),
            };
            skips.push(run(&st.ddml, f)?);
        }
        if let Some(g) = &self.gffb {
            skips = g.forward(ps, &skips)?;
        }

        let mut dec = vec![None; s];
        dec[s - 1] = Some(skips[s - 1].clone());
        for i in (0..s - 1).rev() {
            let st = &self.decoder[i];
            let deeper = dec[i + 1].as_ref().unwrap();
            let skip = &skips[i];
            let up = deeper.resize_bilinear(skip.dim(2), skip.dim(3))?;
            let up = st.up.forward(ps, &up)?;
            let f = st.reduce.forward(ps, &Tensor::concat(&[up, skip.clone()], 1)?)?;
            dec[i] = Some(run(&st.ddml, f)?);
        }

        let mut residuals = Vec::with_capacity(s);
        let mut restored = Vec::with_capacity(s);
        for (i, d) in dec.into_iter().enumerate() {
            let r = self.heads[i].forward(ps, &d.unwrap())?;
            restored.push(pyramid[i].add(&r)?);
            residuals.push(r);
        }
        Ok(ModelOutput { residuals, restored })
    }

    /// Builds the pyramid of `x` and runs the network.
    pub fn forward_image(&self, x: &Tensor<T>) -> Result<ModelOutput<T>> {
        self.forward(&make_pyramid(x, self.cfg.stages)?)
    }
}
