use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Backward, Element, Tensor};

struct LayerNormBackward<T> {
    c: usize,
    plane: usize,
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Element> Backward<T> for LayerNormBackward<T> {
    fn name(&self) -> &'static str {
        "layer_norm"
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        let (c, hw) = (self.c, self.plane);
        let n = grad.len() / (c * hw);
        let gamma = parents[1].data();
        let inv_c = T::lit(1.0 / c as f64);
        let mut gx = vec![T::zero(); grad.len()];
        let mut ggamma = vec![T::zero(); c];
        let mut gbeta = vec![T::zero(); c];
        let mut m1 = vec![T::zero(); hw];
        let mut m2 = vec![T::zero(); hw];
        for ni in 0..n {
            let base = ni * c * hw;
            m1.iter_mut().for_each(|v| *v = T::zero());
            m2.iter_mut().for_each(|v| *v = T::zero());
            for ci in 0..c {
                let off = base + ci * hw;
                let (g, xh) = (&grad[off..off + hw], &self.xhat[off..off + hw]);
                let mut sg = T::zero();
                let mut sgx = T::zero();
                for p in 0..hw {
                    let d = g[p] * gamma[ci];
                    m1[p] = m1[p] + d;
                    m2[p] = m2[p] + d * xh[p];
                    sg = sg + g[p];
                    sgx = sgx + g[p] * xh[p];
                }
                gbeta[ci] = gbeta[ci] + sg;
                ggamma[ci] = ggamma[ci] + sgx;
            }
            let istd = &self.inv_std[ni * hw..(ni + 1) * hw];
            for ci in 0..c {
                let off = base + ci * hw;
                for p in 0..hw {
                    let d = grad[off + p] * gamma[ci];
                    gx[off + p] = istd[p] * (d - m1[p] * inv_c - self.xhat[off + p] * m2[p] * inv_c);
                }
            }
        }
        vec![
            parents[0].is_tracked().then_some(gx),
            parents[1].is_tracked().then_some(ggamma),
            parents[2].is_tracked().then_some(gbeta),
        ]
    }
}

struct L2NormalizeBackward<T> {
    len: usize,
    norms: Vec<T>,
    eps: f64,
}

impl<T: Element> Backward<T> for L2NormalizeBackward<T> {
    fn name(&self) -> &'static str {
        "l2_normalize"
    }

    fn backward(&self, grad: &[T], _parents: &[Tensor<T>], output: &[T]) -> Vec<Option<Vec<T>>> {
        let eps = T::lit(self.eps);
        let mut gx = vec![T::zero(); grad.len()];
        for (r, &norm) in self.norms.iter().enumerate() {
            let s = r * self.len..(r + 1) * self.len;
            let (g, y) = (&grad[s.clone()], &output[s.clone()]);
            let out = &mut gx[s];
            if norm > eps {
                let dot = g.iter().zip(y).fold(T::zero(), |a, (&gi, &yi)| a + gi * yi);
                for j in 0..self.len {
                    out[j] = (g[j] - y[j] * dot) / norm;
                }
            } else {
                // the denominator is clamped to eps here, so the map is linear
                for j in 0..self.len {
                    out[j] = g[j] / eps;
                }
            }
        }
        vec![Some(gx)]
    }
}

impl<T: Element> Tensor<T> {
    /// Normalizes the channel axis of an `N×C×H×W` tensor at every spatial
    /// position, then applies the per-channel affine `gamma`, `beta`.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
        const OP: &str = "layer_norm";
        if self.rank() != 4 {
            return Err(Error::RankMismatch {
                op: OP,
                expected: 4,
                got: self.rank(),
            });
        }
        if !(eps >= 0.0) {
            return Err(Error::contract(OP, format!("eps must be non-negative, got {eps}")));
        }
        let (n, c) = (self.dim(0), self.dim(1));
        let hw = self.dim(2) * self.dim(3);
        for p in [gamma, beta] {
            if p.numel() != c {
                return Err(Error::ShapeMismatch {
                    op: OP,
                    axis: 1,
                    expected: c,
                    got: p.numel(),
                });
            }
        }
        let x = self.data();
        let (gd, bd) = (gamma.data(), beta.data());
        let inv_c = T::lit(1.0 / c as f64);
        let eps_t = T::lit(eps);
        let stats = par::map_range(n, |ni| {
            let base = ni * c * hw;
            let mut mean = vec![T::zero(); hw];
            for ci in 0..c {
                let row = &x[base + ci * hw..base + (ci + 1) * hw];
                mean.iter_mut().zip(row).for_each(|(m, &v)| *m = *m + v);
            }
            mean.iter_mut().for_each(|m| *m = *m * inv_c);
            let mut var = vec![T::zero(); hw];
            for ci in 0..c {
                let row = &x[base + ci * hw..base + (ci + 1) * hw];
                for p in 0..hw {
                    let d = row[p] - mean[p];
                    var[p] = var[p] + d * d;
                }
            }
            let inv_std: Vec<T> = var.iter().map(|&v| (v * inv_c + eps_t).sqrt().recip()).collect();
            let mut xhat = vec![T::zero(); c * hw];
            let mut y = vec![T::zero(); c * hw];
            for ci in 0..c {
                let row = &x[base + ci * hw..base + (ci + 1) * hw];
                for p in 0..hw {
                    let xh = (row[p] - mean[p]) * inv_std[p];
                    xhat[ci * hw + p] = xh;
                    y[ci * hw + p] = xh * gd[ci] + bd[ci];
                }
            }
            (xhat, inv_std, y)
        });
        let mut xhat = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(n * hw);
        let mut out = Vec::with_capacity(x.len());
        for (xh, is, y) in stats {
            xhat.extend(xh);
            inv_std.extend(is);
            out.extend(y);
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            LayerNormBackward {
                c,
                plane: hw,
                xhat,
                inv_std,
            },
        ))
    }

    /// Scales every row along the last axis to unit Euclidean norm
    /// (denominator clamped below by `1e-12`).
    pub fn l2_normalize(&self) -> Result<Tensor<T>> {
        const EPS: f64 = 1e-12;
        if self.rank() == 0 {
            return Err(Error::RankMismatch {
                op: "l2_normalize",
                expected: 1,
                got: 0,
            });
        }
        let len = self.dim(self.rank() - 1);
        let rows = self.numel() / len.max(1);
        let eps = T::lit(EPS);
        let x = self.data();
        let mut norms = Vec::with_capacity(rows);
        let mut out = vec![T::zero(); x.len()];
        for r in 0..rows {
            let row = &x[r * len..(r + 1) * len];
            let norm = row.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            norms.push(norm);
            let d = norm.max(eps);
            for j in 0..len {
                out[r * len + j] = row[j] / d;
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            L2NormalizeBackward { len, norms, eps: EPS },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    #[test]
    fn constant_channels_normalize_to_zero() {
        let x = Tensor::<f64>::full(&[1, 3, 2, 2], 4.5);
        let y = x
            .layer_norm(&Tensor::ones(&[3]), &Tensor::zeros(&[3]), 1e-5)
            .unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_channel_hand_case() {
        let x = Tensor::<f64>::from_vec(&[1, 2, 1, 1], vec![1.0, 3.0]).unwrap();
        let y = x
            .layer_norm(&Tensor::ones(&[2]), &Tensor::zeros(&[2]), 0.0)
            .unwrap();
        assert_eq!(y.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn zero_gamma_gives_beta() {
        let x = Tensor::<f64>::from_vec(&[2, 2, 1, 2], vec![0.1, -3.0, 2.0, 7.0, 1.0, 1.5, -2.0, 0.0]).unwrap();
        let beta = Tensor::from_vec(&[2], vec![0.25, -1.5]).unwrap();
        let y = x.layer_norm(&Tensor::zeros(&[2]), &beta, 1e-5).unwrap();
        assert_eq!(y.data(), &[0.25, 0.25, -1.5, -1.5, 0.25, 0.25, -1.5, -1.5]);
    }

    #[test]
    fn gamma_length_checked() {
        let x = Tensor::<f64>::zeros(&[1, 3, 2, 2]);
        let err = x.layer_norm(&Tensor::ones(&[2]), &Tensor::zeros(&[3]), 1e-5).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { axis: 1, expected: 3, got: 2, .. }));
    }

    #[test]
    fn layer_norm_gradients() {
        let x = Tensor::<f64>::from_vec(&[2, 3, 2, 2], (0..24).map(|v| (v as f64 * 1.3).sin()).collect()).unwrap();
        let g = Tensor::from_vec(&[3], vec![0.5, 1.5, -1.0]).unwrap();
        let b = Tensor::from_vec(&[3], vec![0.1, 0.0, -0.2]).unwrap();
        let w = Tensor::from_vec(&[2, 3, 2, 2], (0..24).map(|v| (v as f64 * 0.7).cos()).collect()).unwrap();
        let err = grad_check(
            |t| t[0].layer_norm(&t[1], &t[2], 1e-5).unwrap().mul(&t[3]).unwrap().sum(),
            &[x, g, b, w],
            1e-5,
        );
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn l2_normalize_rows() {
        let x = Tensor::<f64>::from_vec(&[2, 2], vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        let y = x.l2_normalize().unwrap();
        assert_eq!(y.data(), &[0.6, 0.8, 0.0, 0.0]);
        let x = Tensor::<f64>::from_vec(&[2, 3], vec![0.3, -1.0, 2.0, 0.5, 0.1, -0.7]).unwrap();
        let w = Tensor::<f64>::from_vec(&[2, 3], vec![1.0, 2.0, -1.0, 0.5, 0.3, 0.9]).unwrap();
        let err = grad_check(|t| t[0].l2_normalize().unwrap().mul(&t[1]).unwrap().sum(), &[x, w], 1e-5);
        assert!(err <= 1e-6, "{err}");
    }
}
