use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

use super::params::{Builder, Conv, ParamId, ParamStore};

/// Transposed (channel-wise) multi-head attention.
///
/// Queries come from one feature map and keys/values from another (the same
/// map for self-attention). Each projection is a 1×1 convolution followed by a
/// 3×3 depthwise convolution. The attention matrix is `C/heads × C/heads` per
/// head, contracting over flattened spatial positions.
#[derive(Clone, Debug)]
pub struct Attention {
    pub channels: usize,
    pub context_channels: usize,
    pub heads: usize,
    pub q_p: Conv,
    pub k_p: Conv,
    pub v_p: Conv,
    pub q_d: Conv,
    pub k_d: Conv,
    pub v_d: Conv,
    pub alpha: ParamId,
    pub proj: Conv,
}

/// Intermediate values of one attention call.
pub struct AttentionTrace<T: Element> {
    /// `[N, heads, C/heads, C/heads]`, rows sum to one.
    pub attn: Tensor<T>,
    /// Projected output before the residual is added.
    pub delta: Tensor<T>,
}

impl Attention {
    /// Self-attention over `c` channels.
    pub fn build<T: Element>(b: &mut Builder<'_, T>, c: usize, heads: usize) -> Result<Self> {
        Self::build_cross(b, c, c, heads)
    }

    /// Cross-attention with `c` query channels and `c_ctx` context channels.
    pub fn build_cross<T: Element>(
        b: &mut Builder<'_, T>,
        c: usize,
        c_ctx: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || c % heads != 0 {
            return Err(Error::Config(format!("{c} channels not divisible into {heads} heads")));
        }
        Ok(Attention {
            channels: c,
            context_channels: c_ctx,
            heads,
            q_p: b.conv("q_p", c, c, 1, 1)?,
            k_p: b.conv("k_p", c_ctx, c, 1, 1)?,
            v_p: b.conv("v_p", c_ctx, c, 1, 1)?,
            q_d: b.conv("q_d", c, c, 3, c)?,
            k_d: b.conv("k_d", c, c, 3, c)?,
            v_d: b.conv("v_d", c, c, 3, c)?,
            alpha: b.constant("alpha", &[heads], 1.0)?,
            proj: b.conv("proj", c, c, 1, 1)?,
        })
    }

    /// `x + attention(x, x)`.
    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_cross(ps, x, x)
    }

    /// `query + attention(query, context)`.
    pub fn forward_cross<T: Element>(
        &self,
        ps: &ParamStore<T>,
        query: &Tensor<T>,
        context: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        query.add(&self.trace(ps, query, context)?.delta)
    }

    /// Attention output without the residual.
    pub fn delta<T: Element>(
        &self,
        ps: &ParamStore<T>,
        query: &Tensor<T>,
        context: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        Ok(self.trace(ps, query, context)?.delta)
    }

    pub fn trace<T: Element>(
        &self,
        ps: &ParamStore<T>,
        query: &Tensor<T>,
        context: &Tensor<T>,
    ) -> Result<AttentionTrace<T>> {
        const OP: &str = "attention";
        for (t, c) in [(query, self.channels), (context, self.context_channels)] {
            if t.rank() != 4 {
                return Err(Error::RankMismatch {
                    op: OP,
                    expected: 4,
                    got: t.rank(),
                });
            }
            if t.dim(1) != c {
                return Err(Error::ShapeMismatch {
                    op: OP,
                    axis: 1,
                    expected: c,
                    got: t.dim(1),
                });
            }
        }
        for axis in [0, 2, 3] {
            if query.dim(axis) != context.dim(axis) {
                return Err(Error::ShapeMismatch {
                    op: OP,
                    axis,
                    expected: query.dim(axis),
                    got: context.dim(axis),
                });
            }
        }
        let (n, c, h, w) = (query.dim(0), self.channels, query.dim(2), query.dim(3));
        let heads_shape = [n, self.heads, c / self.heads, h * w];
        let q = self.q_d.forward(ps, &self.q_p.forward(ps, query)?)?;
        let k = self.k_d.forward(ps, &self.k_p.forward(ps, context)?)?;
        let v = self.v_d.forward(ps, &self.v_p.forward(ps, context)?)?;
        let q = q.reshape(&heads_shape)?.l2_normalize()?;
        let k = k.reshape(&heads_shape)?.l2_normalize()?;
        let v = v.reshape(&heads_shape)?;
        let logits = q
            .matmul(&k.transpose()?)?
            .scale_axis(&ps.get(self.alpha).recip(), 1)?;
        let attn = logits.softmax(3)?;
        let out = attn.matmul(&v)?.reshape(&[n, c, h, w])?;
        let delta = self.proj.forward(ps, &out)?;
        Ok(AttentionTrace { attn, delta })
    }
}
