#![allow(dead_code)]

use madnet::blocks::ParamStore;
use madnet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Overwrites every parameter with uniform noise; attention temperatures are
/// kept positive.
pub fn randomize(ps: &mut ParamStore<f64>, seed: u64, amp: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in ps.ids().collect::<Vec<_>>() {
        let name = ps.name(id).to_string();
        let n = ps.get(id).numel();
        let data = if name.ends_with("alpha") {
            (0..n).map(|_| rng.random_range(0.5..1.5)).collect()
        } else if name.contains("theta") {
            ps.get(id).to_vec()
        } else {
            (0..n).map(|_| rng.random_range(-amp..amp)).collect()
        };
        ps.set(id, data).unwrap();
    }
}

/// Direct convolution over NCHW buffers with zero padding.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    x: &[f64],
    (n, cin, h, w): (usize, usize, usize, usize),
    weight: &[f64],
    bias: &[f64],
    cout: usize,
    k: usize,
    groups: usize,
    stride: usize,
) -> Vec<f64> {
    let pad = k / 2;
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let (cig, cog) = (cin / groups, cout / groups);
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for co in 0..cout {
            let g = co / cog;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[co];
                    for ci in 0..cig {
                        let cx = g * cig + ci;
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * cin + cx) * h + iy as usize) * w + ix as usize];
                                acc += xv * weight[((co * cig + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((b * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
