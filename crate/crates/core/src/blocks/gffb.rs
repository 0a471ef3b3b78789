use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

use super::attention::Attention;
use super::params::{Builder, ParamStore};

/// Global feature fusion across pyramid scales.
///
/// Every scale is resized to the coarsest extent and concatenated into a
/// global feature `F_g`. Scale `i` then attends to `F_g` with queries from its
/// own resized feature, and the attention output is resized back and added to
/// the untouched full-resolution feature.
#[derive(Clone, Debug)]
pub struct Gffb {
    pub channels: Vec<usize>,
    pub attn: Vec<Attention>,
}

impl Gffb {
    /// `channels[i]` is the channel count at scale `i`; a single scale builds
    /// nothing and passes features through.
    pub fn build<T: Element>(b: &mut Builder<'_, T>, channels: &[usize], heads: &[usize]) -> Result<Self> {
        if channels.len() != heads.len() {
            return Err(Error::Config("gffb: one head count per scale required".into()));
        }
        let total: usize = channels.iter().sum();
        let attn = if channels.len() < 2 {
            Vec::new()
        } else {
            channels
                .iter()
                .zip(heads)
                .enumerate()
                .map(|(i, (&c, &h))| Attention::build_cross(&mut b.sub(i), c, total, h))
                .collect::<Result<_>>()?
        };
        Ok(Gffb {
            channels: channels.to_vec(),
            attn,
        })
    }

    /// Channel count of the concatenated global feature.
    pub fn global_channels(&self) -> usize {
        self.channels.iter().sum()
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, feats: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        const OP: &str = "gffb";
        if feats.len() != self.channels.len() {
            return Err(Error::contract(
                OP,
                format!("expected {} scales, got {}", self.channels.len(), feats.len()),
            ));
        }
        if self.attn.is_empty() {
            return Ok(feats.to_vec());
        }
        let (h0, w0) = (feats[0].dim(2), feats[0].dim(3));
        for (i, (f, &c)) in feats.iter().zip(&self.channels).enumerate() {
            if f.rank() != 4 || f.dim(1) != c {
                return Err(Error::ShapeMismatch {
                    op: OP,
                    axis: 1,
                    expected: c,
                    got: if f.rank() > 1 { f.dim(1) } else { 0 },
                });
            }
            let (eh, ew) = (h0 >> i, w0 >> i);
            if f.dim(2) != eh || f.dim(3) != ew || (eh << i) != h0 || (ew << i) != w0 {
                return Err(Error::contract(
                    OP,
                    format!("scale {i} has extent {}x{}, expected {eh}x{ew}", f.dim(2), f.dim(3)),
                ));
            }
        }
        let last = feats.len() - 1;
        let (rh, rw) = (feats[last].dim(2), feats[last].dim(3));
        let resized: Vec<Tensor<T>> = feats
            .iter()
            .map(|f| f.resize_bilinear(rh, rw))
            .collect::<Result<_>>()?;
        let global = Tensor::concat(&resized, 1)?;
        feats
            .iter()
            .zip(&resized)
            .zip(&self.attn)
            .map(|((f, q), attn)| {
                let delta = attn.delta(ps, q, &global)?;
                f.add(&delta.resize_bilinear(f.dim(2), f.dim(3))?)
            })
            .collect()
    }
}
