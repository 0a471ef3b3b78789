use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Backward, Element, Tensor};

/// Source taps along one axis: `(i0, i1, weight of i1)`.
fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

struct ResizeBackward {
    src: (usize, usize),
    dst: (usize, usize),
}

impl<T: Element> Backward<T> for ResizeBackward {
    fn name(&self) -> &'static str {
        "resize_bilinear"
    }

    fn backward(&self, grad: &[T], _parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        let (h, w) = self.src;
        let (oh, ow) = self.dst;
        let (ty, tx) = (taps(h, oh), taps(w, ow));
        let planes = grad.len() / (oh * ow);
        let mut gx = vec![T::zero(); planes * h * w];
        par::for_each_chunk(&mut gx, h * w, |p, gp| {
            let g = &grad[p * oh * ow..(p + 1) * oh * ow];
            for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                let ly = T::lit(ly);
                for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                    let lx = T::lit(lx);
                    let v = g[oy * ow + ox];
                    let (top, bot) = (v * (T::one() - ly), v * ly);
                    gp[y0 * w + x0] = gp[y0 * w + x0] + top * (T::one() - lx);
                    gp[y0 * w + x1] = gp[y0 * w + x1] + top * lx;
                    gp[y1 * w + x0] = gp[y1 * w + x0] + bot * (T::one() - lx);
                    gp[y1 * w + x1] = gp[y1 * w + x1] + bot * lx;
                }
            }
        });
        vec![Some(gx)]
    }
}

impl<T: Element> Tensor<T> {
    /// Bilinear resampling of the two trailing axes to `(out_h, out_w)` with
    /// half-pixel centers and edge clamping.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
        const OP: &str = "resize_bilinear";
        if self.rank() < 2 {
            return Err(Error::RankMismatch {
                op: OP,
                expected: 2,
                got: self.rank(),
            });
        }
        let r = self.rank();
        let (h, w) = (self.dim(r - 2), self.dim(r - 1));
        if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
            return Err(Error::contract(OP, format!("empty extent {h}x{w} -> {out_h}x{out_w}")));
        }
        if (h, w) == (out_h, out_w) {
            return Ok(self.clone());
        }
        let (ty, tx) = (taps(h, out_h), taps(w, out_w));
        let planes = self.numel() / (h * w);
        let x = self.data();
        let mut out = vec![T::zero(); planes * out_h * out_w];
        par::for_each_chunk(&mut out, out_h * out_w, |p, op| {
            let src = &x[p * h * w..(p + 1) * h * w];
            for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                let ly = T::lit(ly);
                for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                    let lx = T::lit(lx);
                    let (a, b) = (src[y0 * w + x0], src[y0 * w + x1]);
                    let (c, d) = (src[y1 * w + x0], src[y1 * w + x1]);
                    let top = a + lx * (b - a);
                    let bot = c + lx * (d - c);
                    op[oy * out_w + ox] = top + ly * (bot - top);
                }
            }
        });
        let mut shape = self.shape().to_vec();
        shape[r - 2] = out_h;
        shape[r - 1] = out_w;
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            ResizeBackward {
                src: (h, w),
                dst: (out_h, out_w),
            },
        ))
    }
}
