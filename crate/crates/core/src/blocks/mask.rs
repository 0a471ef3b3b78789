use crate::error::{Error, Result};
use crate::fft::{fftshift_coords, Spectrum};
use crate::tensor::{Backward, Element, Tensor};

/// Temperature of the soft boundary used for the gradient to θ.
pub const MASK_TEMPERATURE: f64 = 10.0;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Half-widths `(r_h, r_w) = (σ(θ_h)·⌊H/2⌋, σ(θ_w)·⌊W/2⌋)`.
pub fn mask_radii(theta_h: f64, theta_w: f64, h: usize, w: usize) -> (f64, f64) {
    (sigmoid(theta_h) * (h / 2) as f64, sigmoid(theta_w) * (w / 2) as f64)
}

/// Binary low-pass support over a DC-at-origin `h×w` grid, row-major.
pub fn mask_support(h: usize, w: usize, r_h: f64, r_w: f64) -> Vec<bool> {
    let g = fftshift_coords(h, w);
    g.offsets()
        .into_iter()
        .map(|(du, dv)| du.abs() as f64 <= r_h && dv.abs() as f64 <= r_w)
        .collect()
}

struct MaskBackward {
    h: usize,
    w: usize,
    theta: (f64, f64),
    support: Vec<bool>,
}

impl<T: Element> Backward<T> for MaskBackward {
    fn name(&self) -> &'static str {
        "frequency_mask"
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        let (h, w) = (self.h, self.w);
        let bins = h * w;
        let s = parents[0].data();
        let gs = parents[0].is_tracked().then(|| {
            let mut g = vec![T::zero(); grad.len()];
            for (i, gi) in g.chunks_exact_mut(2).enumerate() {
                if self.support[i % bins] {
                    gi[0] = grad[2 * i];
                    gi[1] = grad[2 * i + 1];
                }
            }
            g
        });
        let need_theta = parents[1].is_tracked() || parents[2].is_tracked();
        let (mut dh, mut dw) = (0.0f64, 0.0f64);
        if need_theta {
            // straight-through: soft gate σ(τ(r_h−|du|))·σ(τ(r_w−|dv|)) stands in for the binary mask
            let (r_h, r_w) = mask_radii(self.theta.0, self.theta.1, h, w);
            let sh = sigmoid(self.theta.0);
            let sw = sigmoid(self.theta.1);
            let drh = sh * (1.0 - sh) * (h / 2) as f64;
            let drw = sw * (1.0 - sw) * (w / 2) as f64;
            let g = fftshift_coords(h, w);
            let tau = MASK_TEMPERATURE;
            let gate_h: Vec<(f64, f64)> = (0..h)
                .map(|u| {
                    let a = sigmoid(tau * (r_h - g.du(u).abs() as f64));
                    (a, tau * a * (1.0 - a))
                })
                .collect();
            let gate_w: Vec<(f64, f64)> = (0..w)
                .map(|v| {
                    let b = sigmoid(tau * (r_w - g.dv(v).abs() as f64));
                    (b, tau * b * (1.0 - b))
                })
                .collect();
            for i in 0..grad.len() / 2 {
                let bin = i % bins;
                let (u, v) = (bin / w, bin % w);
                let gs_dot = (grad[2 * i] * s[2 * i] + grad[2 * i + 1] * s[2 * i + 1]).to_f64().unwrap();
                let (a, da) = gate_h[u];
                let (b, db) = gate_w[v];
                dh += gs_dot * da * b * drh;
                dw += gs_dot * a * db * drw;
            }
        }
        vec![
            gs,
            parents[1].is_tracked().then(|| vec![T::lit(dh)]),
            parents[2].is_tracked().then(|| vec![T::lit(dw)]),
        ]
    }
}

/// Splits a spectrum into the centered low-pass rectangle and its complement.
///
/// `low + high` reproduces `s` exactly. Gradients reach `theta_h` and
/// `theta_w` through a soft boundary of temperature [`MASK_TEMPERATURE`].
pub fn adaptive_frequency_mask<T: Element>(
    s: &Spectrum<T>,
    theta_h: &Tensor<T>,
    theta_w: &Tensor<T>,
) -> Result<(Spectrum<T>, Spectrum<T>)> {
    if theta_h.numel() != 1 || theta_w.numel() != 1 {
        return Err(Error::contract("frequency_mask", "theta_h and theta_w must be single values"));
    }
    let r = s.shape().len();
    let (h, w) = (s.shape()[r - 2], s.shape()[r - 1]);
    let theta = (theta_h.item().to_f64().unwrap(), theta_w.item().to_f64().unwrap());
    let (r_h, r_w) = mask_radii(theta.0, theta.1, h, w);
    let support = mask_support(h, w, r_h, r_w);
    let bins = h * w;
    let data = s.packed().data();
    let mut low = vec![T::zero(); data.len()];
    for (i, (o, z)) in low.chunks_exact_mut(2).zip(data.chunks_exact(2)).enumerate() {
        if support[i % bins] {
            o.copy_from_slice(z);
        }
    }
    let low = Tensor::from_op(
        s.packed().shape().to_vec(),
        low,
        vec![s.packed().clone(), theta_h.clone(), theta_w.clone()],
        MaskBackward {
            h,
            w,
            theta,
            support,
        },
    );
    let low = Spectrum::from_packed(low)?;
    let high = s.sub(&low)?;
    Ok((low, high))
}
