use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{gemm, Backward, Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec {
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }
}

impl Conv2dSpec {
    pub fn same(kernel: usize) -> Self {
        Conv2dSpec {
            padding: kernel / 2,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
    groups: usize,
}

impl Geometry {
    fn cin_g(&self) -> usize {
        self.cin / self.groups
    }
    fn cout_g(&self) -> usize {
        self.cout / self.groups
    }
    fn kk(&self) -> usize {
        self.kh * self.kw
    }
    fn in_plane(&self) -> usize {
        self.h * self.w
    }
    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }
    fn is_depthwise(&self) -> bool {
        self.cin_g() == 1 && self.cout_g() == 1
    }
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
    fn weight_len(&self) -> usize {
        self.cout * self.cin_g() * self.kk()
    }

    /// Output columns `ox` whose input column `ox*s + k - p` lies inside `0..len`.
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.pad as isize);
        let k = k as isize;
        let lo = (p - k).max(0);
        let lo = (lo + s - 1) / s;
        let hi = (len as isize - 1 + p - k).div_euclid(s) + 1;
        let hi = hi.clamp(0, out_len as isize);
        (lo.min(hi) as usize, hi as usize)
    }
}

fn im2col<T: Element>(x: &[T], g: &Geometry, col: &mut [T]) {
    let (h, w, ho, wo) = (g.h, g.w, g.ho, g.wo);
    for ci in 0..g.cin_g() {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_range(ky, h, ho);
            for kx in 0..g.kw {
                let (ox_lo, ox_hi) = g.valid_range(kx, w, wo);
                let row = ((ci * g.kh + ky) * g.kw + kx) * ho * wo;
                let dst = &mut col[row..row + ho * wo];
                dst.iter_mut().for_each(|v| *v = T::zero());
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    let src = &plane[iy * w..(iy + 1) * w];
                    let d = &mut dst[oy * wo..(oy + 1) * wo];
                    for ox in ox_lo..ox_hi {
                        d[ox] = src[ox * g.stride + kx - g.pad];
                    }
                }
            }
        }
    }
}

fn col2im<T: Element>(col: &[T], g: &Geometry, x: &mut [T]) {
    let (h, w, ho, wo) = (g.h, g.w, g.ho, g.wo);
    for ci in 0..g.cin_g() {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_range(ky, h, ho);
            for kx in 0..g.kw {
                let (ox_lo, ox_hi) = g.valid_range(kx, w, wo);
                let row = ((ci * g.kh + ky) * g.kw + kx) * ho * wo;
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    let src = &col[row + oy * wo..row + (oy + 1) * wo];
                    let d = &mut plane[iy * w..(iy + 1) * w];
                    for ox in ox_lo..ox_hi {
                        let ix = ox * g.stride + kx - g.pad;
                        d[ix] = d[ix] + src[ox];
                    }
                }
            }
        }
    }
}

/// Single-channel correlation of one plane with a `kh×kw` kernel.
fn depthwise_plane<T: Element>(x: &[T], k: &[T], g: &Geometry, out: &mut [T]) {
    let (w, wo) = (g.w, g.wo);
    for ky in 0..g.kh {
        let (oy_lo, oy_hi) = g.valid_range(ky, g.h, g.ho);
        for kx in 0..g.kw {
            let kv = k[ky * g.kw + kx];
            let (ox_lo, ox_hi) = g.valid_range(kx, w, wo);
            for oy in oy_lo..oy_hi {
                let iy = oy * g.stride + ky - g.pad;
                let src = &x[iy * w..(iy + 1) * w];
                let d = &mut out[oy * wo..(oy + 1) * wo];
                for ox in ox_lo..ox_hi {
                    d[ox] = d[ox] + kv * src[ox * g.stride + kx - g.pad];
                }
            }
        }
    }
}

/// Accumulates input and kernel gradients of [`depthwise_plane`].
fn depthwise_plane_backward<T: Element>(
    x: &[T],
    k: &[T],
    gy: &[T],
    g: &Geometry,
    gx: &mut [T],
    gk: &mut [T],
) {
    let (w, wo) = (g.w, g.wo);
    for ky in 0..g.kh {
        let (oy_lo, oy_hi) = g.valid_range(ky, g.h, g.ho);
        for kx in 0..g.kw {
            let kv = k[ky * g.kw + kx];
            let (ox_lo, ox_hi) = g.valid_range(kx, w, wo);
            let mut acc = T::zero();
            for oy in oy_lo..oy_hi {
                let iy = oy * g.stride + ky - g.pad;
                let src = &x[iy * w..(iy + 1) * w];
                let dsrc = &mut gx[iy * w..(iy + 1) * w];
                let gyr = &gy[oy * wo..(oy + 1) * wo];
                for ox in ox_lo..ox_hi {
                    let ix = ox * g.stride + kx - g.pad;
                    acc = acc + gyr[ox] * src[ix];
                    dsrc[ix] = dsrc[ix] + kv * gyr[ox];
                }
            }
            gk[ky * g.kw + kx] = gk[ky * g.kw + kx] + acc;
        }
    }
}

/// Forward pass for one batch item; `out` holds `cout` output planes.
fn forward_item<T: Element>(x: &[T], wt: &[T], g: &Geometry, col: &mut Vec<T>, out: &mut [T]) {
    let (cin_g, cout_g, kk) = (g.cin_g(), g.cout_g(), g.kk());
    let (ip, op) = (g.in_plane(), g.out_plane());
    for gi in 0..g.groups {
        let xg = &x[gi * cin_g * ip..(gi + 1) * cin_g * ip];
        let wg = &wt[gi * cout_g * cin_g * kk..(gi + 1) * cout_g * cin_g * kk];
        let og = &mut out[gi * cout_g * op..(gi + 1) * cout_g * op];
        if g.is_pointwise() {
            gemm(cout_g, cin_g, op, (wg, cin_g, 1), (xg, ip, 1), T::zero(), og);
        } else {
            col.resize(cin_g * kk * op, T::zero());
            im2col(xg, g, col);
            gemm(cout_g, cin_g * kk, op, (wg, cin_g * kk, 1), (col, op, 1), T::zero(), og);
        }
    }
}

struct Conv2dBackward {
    geo: Geometry,
}

impl<T: Element> Backward<T> for Conv2dBackward {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        let g = self.geo;
        let (input, weight) = (&parents[0], &parents[1]);
        let (x, wt) = (input.data(), weight.data());
        let (ip, op, kk) = (g.in_plane(), g.out_plane(), g.kk());
        let (cin_g, cout_g) = (g.cin_g(), g.cout_g());
        let need_x = input.is_tracked();
        let need_w = weight.is_tracked();

        let gb = parents.get(2).filter(|b| b.is_tracked()).map(|_| {
            let mut gb = vec![T::zero(); g.cout];
            for n in 0..g.n {
                for (co, acc) in gb.iter_mut().enumerate() {
                    let base = (n * g.cout + co) * op;
                    *acc = *acc + grad[base..base + op].iter().fold(T::zero(), |a, &b| a + b);
                }
            }
            gb
        });

        if g.is_depthwise() {
            // one task per (n, c) plane
            let parts = par::map_range(g.n * g.cin, |plane| {
                let c = plane % g.cin;
                let xs = &x[plane * ip..(plane + 1) * ip];
                let gy = &grad[plane * op..(plane + 1) * op];
                let k = &wt[c * kk..(c + 1) * kk];
                let mut gx = vec![T::zero(); ip];
                let mut gk = vec![T::zero(); kk];
                depthwise_plane_backward(xs, k, gy, &g, &mut gx, &mut gk);
                (gx, gk)
            });
            let mut gw = vec![T::zero(); g.weight_len()];
            let mut gx = Vec::with_capacity(x.len());
            for (plane, (px, pk)) in parts.into_iter().enumerate() {
                let c = plane % g.cin;
                gx.extend_from_slice(&px);
                for (a, b) in gw[c * kk..(c + 1) * kk].iter_mut().zip(pk) {
                    *a = *a + b;
                }
            }
            return vec![need_x.then_some(gx), need_w.then_some(gw), gb];
        }

        let parts = par::map_range(g.n, |n| {
            let xn = &x[n * g.cin * ip..(n + 1) * g.cin * ip];
            let gyn = &grad[n * g.cout * op..(n + 1) * g.cout * op];
            let mut gx = if need_x {
                vec![T::zero(); g.cin * ip]
            } else {
                Vec::new()
            };
            let mut gw = if need_w {
                vec![T::zero(); g.weight_len()]
            } else {
                Vec::new()
            };
            let mut col = Vec::new();
            for gi in 0..g.groups {
                let xg = &xn[gi * cin_g * ip..(gi + 1) * cin_g * ip];
                let gyg = &gyn[gi * cout_g * op..(gi + 1) * cout_g * op];
                let wrange = gi * cout_g * cin_g * kk..(gi + 1) * cout_g * cin_g * kk;
                let wg = &wt[wrange.clone()];
                if g.is_pointwise() {
                    if need_w {
                        // dW = dY · Xᵀ
                        gemm(cout_g, op, cin_g, (gyg, op, 1), (xg, 1, ip), T::zero(), &mut gw[wrange]);
                    }
                    if need_x {
                        // dX = Wᵀ · dY
                        let gxg = &mut gx[gi * cin_g * ip..(gi + 1) * cin_g * ip];
                        gemm(cin_g, cout_g, op, (wg, 1, cin_g), (gyg, op, 1), T::zero(), gxg);
                    }
                } else {
                    let rows = cin_g * kk;
                    col.resize(rows * op, T::zero());
                    if need_w {
                        im2col(xg, &g, &mut col);
                        gemm(cout_g, op, rows, (gyg, op, 1), (&col, 1, op), T::zero(), &mut gw[wrange]);
                    }
                    if need_x {
                        gemm(rows, cout_g, op, (wg, 1, rows), (gyg, op, 1), T::zero(), &mut col);
                        col2im(&col, &g, &mut gx[gi * cin_g * ip..(gi + 1) * cin_g * ip]);
                    }
                }
            }
            (gx, gw)
        });

        let mut gx_all = if need_x { Vec::with_capacity(x.len()) } else { Vec::new() };
        let mut gw_all = vec![T::zero(); if need_w { g.weight_len() } else { 0 }];
        for (gx, gw) in parts {
            gx_all.extend_from_slice(&gx);
            for (a, b) in gw_all.iter_mut().zip(gw) {
                *a = *a + b;
            }
        }
        vec![need_x.then_some(gx_all), need_w.then_some(gw_all), gb]
    }
}

impl<T: Element> Tensor<T> {
    /// 2-D cross-correlation of an `N×Cin×H×W` input with a
    /// `Cout×(Cin/groups)×kh×kw` kernel.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        spec: Conv2dSpec,
    ) -> Result<Tensor<T>> {
        const OP: &str = "conv2d";
        if self.rank() != 4 {
            return Err(Error::RankMismatch {
                op: OP,
                expected: 4,
                got: self.rank(),
            });
        }
        if weight.rank() != 4 {
            return Err(Error::RankMismatch {
                op: OP,
                expected: 4,
                got: weight.rank(),
            });
        }
        let (n, cin, h, w) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        let (cout, wcin, kh, kw) = (weight.dim(0), weight.dim(1), weight.dim(2), weight.dim(3));
        let Conv2dSpec {
            stride,
            padding: pad,
            groups,
        } = spec;
        if stride == 0 || groups == 0 {
            return Err(Error::contract(OP, "stride and groups must be positive"));
        }
        if cin % groups != 0 || cout % groups != 0 {
            return Err(Error::contract(
                OP,
                format!("channels ({cin} in, {cout} out) not divisible by groups {groups}"),
            ));
        }
        if wcin != cin / groups {
            return Err(Error::ShapeMismatch {
                op: OP,
                axis: 1,
                expected: cin / groups,
                got: wcin,
            });
        }
        if let Some(b) = bias {
            if b.rank() != 1 || b.dim(0) != cout {
                return Err(Error::ShapeMismatch {
                    op: OP,
                    axis: 0,
                    expected: cout,
                    got: b.numel(),
                });
            }
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::contract(
                OP,
                format!("kernel {kh}x{kw} larger than padded input {h}x{w} (+{pad})"),
            ));
        }
        let g = Geometry {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
            stride,
            pad,
            groups,
        };
        let (ip, op, kk) = (g.in_plane(), g.out_plane(), g.kk());
        let (x, wt) = (self.data(), weight.data());
        let mut out = vec![T::zero(); n * cout * op];

        if g.is_depthwise() {
            par::for_each_chunk(&mut out, op, |plane, o| {
                let c = plane % cout;
                depthwise_plane(&x[plane * ip..(plane + 1) * ip], &wt[c * kk..(c + 1) * kk], &g, o);
            });
        } else {
            par::for_each_chunk(&mut out, cout * op, |item, o| {
                let mut col = Vec::new();
                forward_item(&x[item * cin * ip..(item + 1) * cin * ip], wt, &g, &mut col, o);
            });
        }
        if let Some(b) = bias {
            let bd = b.data();
            par::for_each_chunk(&mut out, op, |plane, o| {
                let bv = bd[plane % cout];
                o.iter_mut().for_each(|v| *v = *v + bv);
            });
        }

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Ok(Tensor::from_op(
            vec![n, cout, g.ho, g.wo],
            out,
            parents,
            Conv2dBackward { geo: g },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct quadruple loop.
    fn naive(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, s: Conv2dSpec) -> Vec<f64> {
        let (n, cin, h, wd) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (cout, cing, kh, kw) = (w.dim(0), w.dim(1), w.dim(2), w.dim(3));
        let ho = (h + 2 * s.padding - kh) / s.stride + 1;
        let wo = (wd + 2 * s.padding - kw) / s.stride + 1;
        let coutg = cout / s.groups;
        let mut out = vec![0.0; n * cout * ho * wo];
        for ni in 0..n {
            for co in 0..cout {
                let grp = co / coutg;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b.map_or(0.0, |b| b.data()[co]);
                        for ci in 0..cing {
                            let cabs = grp * cing + ci;
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * s.stride + ky) as isize - s.padding as isize;
                                    let ix = (ox * s.stride + kx) as isize - s.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    let xv = x.data()[((ni * cin + cabs) * h + iy as usize) * wd + ix as usize];
                                    let wv = w.data()[((co * cing + ci) * kh + ky) * kw + kx];
                                    acc += xv * wv;
                                }
                            }
                        }
                        out[((ni * cout + co) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_is_exact() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 3, 3], (0..9).map(|v| v as f64 * 0.37).collect()).unwrap();
        let w = Tensor::<f64>::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let y = x.conv2d(&w, None, Conv2dSpec::default()).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn output_shape() {
        let x = Tensor::<f64>::zeros(&[2, 4, 8, 8]);
        let w = Tensor::<f64>::zeros(&[6, 4, 3, 3]);
        let y = x.conv2d(&w, None, Conv2dSpec::same(3)).unwrap();
        assert_eq!(y.shape(), &[2, 6, 8, 8]);
        let w2 = Tensor::<f64>::zeros(&[6, 4, 3, 3]);
        let s2 = Conv2dSpec { stride: 2, padding: 1, groups: 1 };
        assert_eq!(x.conv2d(&w2, None, s2).unwrap().shape(), &[2, 6, 4, 4]);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cases = [
            ([1, 2, 5, 5], [3, 2, 3, 3], Conv2dSpec::default()),
            ([1, 2, 5, 5], [3, 2, 3, 3], Conv2dSpec::same(3)),
            ([2, 4, 7, 6], [4, 2, 3, 3], Conv2dSpec { stride: 2, padding: 1, groups: 2 }),
            ([2, 3, 6, 5], [3, 1, 3, 3], Conv2dSpec { stride: 1, padding: 1, groups: 3 }),
            ([2, 3, 6, 5], [3, 1, 3, 3], Conv2dSpec { stride: 2, padding: 1, groups: 3 }),
            ([2, 3, 4, 4], [5, 3, 1, 1], Conv2dSpec::default()),
        ];
        for (xs, ws, spec) in cases {
            let x = rand_t(&xs, &mut rng);
            let w = rand_t(&ws, &mut rng);
            let b = rand_t(&[ws[0]], &mut rng);
            let y = x.conv2d(&w, Some(&b), spec).unwrap();
            let want = naive(&x, &w, Some(&b), spec);
            for (a, e) in y.data().iter().zip(&want) {
                assert!((a - e).abs() <= 1e-12 * e.abs().max(1.0), "{spec:?}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn channel_mismatch_names_axis() {
        let x = Tensor::<f64>::zeros(&[1, 3, 4, 4]);
        let w = Tensor::<f64>::zeros(&[2, 2, 3, 3]);
        match x.conv2d(&w, None, Conv2dSpec::default()).unwrap_err() {
            Error::ShapeMismatch { axis, expected, got, .. } => assert_eq!((axis, expected, got), (1, 3, 2)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cases = [
            ([2, 2, 5, 4], [3, 2, 3, 3], Conv2dSpec::same(3)),
            ([1, 4, 5, 5], [4, 2, 3, 3], Conv2dSpec { stride: 2, padding: 1, groups: 2 }),
            ([2, 3, 4, 5], [3, 1, 3, 3], Conv2dSpec { stride: 1, padding: 1, groups: 3 }),
            ([2, 3, 3, 3], [2, 3, 1, 1], Conv2dSpec::default()),
        ];
        for (xs, ws, spec) in cases {
            let x = rand_t(&xs, &mut rng);
            let w = rand_t(&ws, &mut rng);
            let b = rand_t(&[ws[0]], &mut rng);
            let err = grad_check(
                |t| t[0].conv2d(&t[1], Some(&t[2]), spec).unwrap().square().sum(),
                &[x, w, b],
                1e-5,
            );
            assert!(err <= 1e-6, "{spec:?}: {err}");
        }
    }
}
