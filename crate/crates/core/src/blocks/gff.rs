use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

use super::params::{Builder, Conv, ParamStore};

/// Gated feed-forward network.
///
/// `1×1 C→2eC`, `3×3` depthwise, split into halves `h₁, h₂`, then
/// `1×1 eC→C` applied to `gelu(h₁) ⊙ h₂`.
#[derive(Clone, Debug)]
pub struct Gff {
    pub channels: usize,
    pub hidden: usize,
    pub conv_in: Conv,
    pub dw: Conv,
    pub conv_out: Conv,
}

impl Gff {
    pub fn build<T: Element>(b: &mut Builder<'_, T>, c: usize, ratio: f64) -> Result<Self> {
        let hidden = (ratio * c as f64).round() as usize;
        if hidden == 0 {
            return Err(Error::Config(format!("gff ratio {ratio} gives no hidden channels for C={c}")));
        }
        Ok(Gff {
            channels: c,
            hidden,
            conv_in: b.conv("conv_in", c, 2 * hidden, 1, 1)?,
            dw: b.conv("dw", 2 * hidden, 2 * hidden, 3, 2 * hidden)?,
            conv_out: b.conv("conv_out", hidden, c, 1, 1)?,
        })
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, f: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.dw.forward(ps, &self.conv_in.forward(ps, f)?)?;
        let halves = h.chunk(2, 1)?;
        let gated = halves[0].gelu().mul(&halves[1])?;
        self.conv_out.forward(ps, &gated)
    }
}
