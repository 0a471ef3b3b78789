//! Orthonormal 2D Fourier transforms over the two trailing axes.
//!
//! A [`Spectrum`] stores complex bins with DC at the origin, packed as a real
//! tensor whose extra trailing axis of length 2 holds `(re, im)`. Both
//! directions carry a `1/√(HW)` factor.

mod kernel;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Backward, Element, Tensor};

pub use kernel::{transform, transform2};

/// Complex spectrum of a real tensor, packed as `[..., H, W, 2]`.
#[derive(Clone, Debug)]
pub struct Spectrum<T: Element = f32> {
    shape: Vec<usize>,
    packed: Tensor<T>,
}

fn plane_dims(shape: &[usize], op: &'static str) -> Result<(usize, usize, usize)> {
    let r = shape.len();
    if r < 2 {
        return Err(Error::RankMismatch {
            op,
            expected: 2,
            got: r,
        });
    }
    let (h, w) = (shape[r - 2], shape[r - 1]);
    let planes = shape[..r - 2].iter().product();
    Ok((planes, h, w))
}

/// Transforms every plane of `src` (packed complex) into `dst` (packed complex).
fn transform_packed<T: Element>(src: &[T], dst: &mut [T], h: usize, w: usize, inverse: bool) {
    let plane = 2 * h * w;
    par::for_each_chunk(dst, plane, |p, out| {
        let s = &src[p * plane..(p + 1) * plane];
        let mut buf: Vec<Complex64> = s
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0].to_f64().unwrap(), c[1].to_f64().unwrap()))
            .collect();
        transform2(&mut buf, h, w, inverse);
        for (o, z) in out.chunks_exact_mut(2).zip(&buf) {
            o[0] = T::lit(z.re);
            o[1] = T::lit(z.im);
        }
    });
}

fn real_to_packed<T: Element>(x: &[T]) -> Vec<T> {
    x.iter().flat_map(|&v| [v, T::zero()]).collect()
}

struct Fft2Backward {
    h: usize,
    w: usize,
}

impl<T: Element> Backward<T> for Fft2Backward {
    fn name(&self) -> &'static str {
        "fft2"
    }

    fn backward(&self, grad: &[T], _parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        // adjoint of the unitary symmetric DFT: Re(ifft2(g))
        let mut tmp = vec![T::zero(); grad.len()];
        transform_packed(grad, &mut tmp, self.h, self.w, true);
        vec![Some(tmp.chunks_exact(2).map(|c| c[0]).collect())]
    }
}

struct Ifft2Backward {
    h: usize,
    w: usize,
}

impl<T: Element> Backward<T> for Ifft2Backward {
    fn name(&self) -> &'static str {
        "ifft2"
    }

    fn backward(&self, grad: &[T], _parents: &[Tensor<T>], _output: &[T]) -> Vec<Option<Vec<T>>> {
        let src = real_to_packed(grad);
        let mut out = vec![T::zero(); src.len()];
        transform_packed(&src, &mut out, self.h, self.w, false);
        vec![Some(out)]
    }
}

struct AbsBackward;

impl<T: Element> Backward<T> for AbsBackward {
    fn name(&self) -> &'static str {
        "complex_abs"
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], output: &[T]) -> Vec<Option<Vec<T>>> {
        let z = parents[0].data();
        let mut g = vec![T::zero(); z.len()];
        for (i, (&gi, &m)) in grad.iter().zip(output).enumerate() {
            if m > T::zero() {
                g[2 * i] = gi * z[2 * i] / m;
                g[2 * i + 1] = gi * z[2 * i + 1] / m;
            }
        }
        vec![Some(g)]
    }
}

/// Forward transform of the two trailing axes of a real tensor.
pub fn fft2<T: Element>(x: &Tensor<T>) -> Result<Spectrum<T>> {
    let (_, h, w) = plane_dims(x.shape(), "fft2")?;
    let src = real_to_packed(x.data());
    let mut out = vec![T::zero(); src.len()];
    transform_packed(&src, &mut out, h, w, false);
    let mut shape = x.shape().to_vec();
    shape.push(2);
    let packed = Tensor::from_op(shape, out, vec![x.clone()], Fft2Backward { h, w });
    Ok(Spectrum {
        shape: x.shape().to_vec(),
        packed,
    })
}

/// Inverse transform; the imaginary part of the result is discarded.
pub fn ifft2<T: Element>(s: &Spectrum<T>) -> Result<Tensor<T>> {
    let (_, h, w) = plane_dims(&s.shape, "ifft2")?;
    let mut out = vec![T::zero(); s.packed.numel()];
    transform_packed(s.packed.data(), &mut out, h, w, true);
    let re = out.chunks_exact(2).map(|c| c[0]).collect();
    Ok(Tensor::from_op(
        s.shape.clone(),
        re,
        vec![s.packed.clone()],
        Ifft2Backward { h, w },
    ))
}

impl<T: Element> Spectrum<T> {
    /// Wraps a packed `[..., H, W, 2]` tensor.
    pub fn from_packed(packed: Tensor<T>) -> Result<Self> {
        let r = packed.rank();
        if r < 3 || packed.dim(r - 1) != 2 {
            return Err(Error::contract(
                "spectrum",
                format!("packed spectrum needs a trailing axis of 2, got {:?}", packed.shape()),
            ));
        }
        Ok(Spectrum {
            shape: packed.shape()[..r - 1].to_vec(),
            packed,
        })
    }

    /// Builds a spectrum from separate real and imaginary tensors of equal shape.
    pub fn from_parts(re: &Tensor<T>, im: &Tensor<T>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(crate::tensor::shape_error("spectrum", re.shape(), im.shape()));
        }
        let mut s = re.shape().to_vec();
        s.push(1);
        let packed = Tensor::concat(&[re.reshape(&s)?, im.reshape(&s)?], s.len() - 1)?;
        Self::from_packed(packed)
    }

    /// Shape of the originating spatial tensor.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn packed(&self) -> &Tensor<T> {
        &self.packed
    }

    pub fn re(&self) -> Result<Tensor<T>> {
        self.part(0)
    }

    pub fn im(&self) -> Result<Tensor<T>> {
        self.part(1)
    }

    fn part(&self, i: usize) -> Result<Tensor<T>> {
        self.packed.narrow(self.shape.len(), i, 1)?.reshape(&self.shape)
    }

    /// Complex value of bin `(plane, u, v)` as f64.
    pub fn bin(&self, plane: usize, u: usize, v: usize) -> Complex64 {
        let (h, w) = (self.shape[self.shape.len() - 2], self.shape[self.shape.len() - 1]);
        let i = 2 * ((plane * h + u) * w + v);
        let d = self.packed.data();
        Complex64::new(d[i].to_f64().unwrap(), d[i + 1].to_f64().unwrap())
    }

    pub fn add(&self, other: &Spectrum<T>) -> Result<Spectrum<T>> {
        Self::from_packed(self.packed.add(&other.packed)?)
    }

    pub fn sub(&self, other: &Spectrum<T>) -> Result<Spectrum<T>> {
        Self::from_packed(self.packed.sub(&other.packed)?)
    }

    /// Per-bin modulus `|S(u, v)|`, shaped like the spatial tensor.
    ///
    /// The subgradient at a zero-magnitude bin is zero.
    pub fn abs(&self) -> Tensor<T> {
        let mag = self
            .packed
            .data()
            .chunks_exact(2)
            .map(|c| c[0].hypot(c[1]))
            .collect();
        Tensor::from_op(self.shape.clone(), mag, vec![self.packed.clone()], AbsBackward)
    }

    /// Largest `|S(u,v) − conj(S(−u,−v))|` over all bins.
    pub fn hermitian_error(&self) -> f64 {
        let r = self.shape.len();
        let (h, w) = (self.shape[r - 2], self.shape[r - 1]);
        let planes = self.shape[..r - 2].iter().product();
        let mut worst = 0.0f64;
        for p in 0..planes {
            for u in 0..h {
                for v in 0..w {
                    let a = self.bin(p, u, v);
                    let b = self.bin(p, (h - u) % h, (w - v) % w).conj();
                    worst = worst.max((a - b).norm());
                }
            }
        }
        worst
    }
}

/// Signed frequency offsets from DC for a DC-at-origin `h×w` grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreqGrid {
    pub h: usize,
    pub w: usize,
}

fn offset(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl FreqGrid {
    /// Offset of row `u`, in `[−⌈h/2⌉+1, ⌊h/2⌋]`.
    pub fn du(&self, u: usize) -> i64 {
        offset(u, self.h)
    }

    pub fn dv(&self, v: usize) -> i64 {
        offset(v, self.w)
    }

    /// Position of bin `(u, v)` in the centered (shifted) layout.
    pub fn centered(&self, u: usize, v: usize) -> (usize, usize) {
        ((u + self.h / 2) % self.h, (v + self.w / 2) % self.w)
    }

    /// `(du, dv)` for every bin in row-major storage order.
    pub fn offsets(&self) -> Vec<(i64, i64)> {
        (0..self.h)
            .flat_map(|u| (0..self.w).map(move |v| (self.du(u), self.dv(v))))
            .collect()
    }
}

pub fn fftshift_coords(h: usize, w: usize) -> FreqGrid {
    assert!(h >= 1 && w >= 1, "fftshift_coords: empty grid {h}x{w}");
    FreqGrid { h, w }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_grid_centers_dc() {
        let g = fftshift_coords(4, 4);
        assert_eq!(g.centered(0, 0), (2, 2));
        assert_eq!((0..4).map(|u| g.du(u)).collect::<Vec<_>>(), vec![0, 1, 2, -1]);
        assert_eq!(fftshift_coords(1, 1).offsets(), vec![(0, 0)]);
        assert_eq!((0..5).map(|u| offset(u, 5)).collect::<Vec<_>>(), vec![0, 1, 2, -2, -1]);
    }

    #[test]
    fn from_parts_roundtrip() {
        let re = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let im = re.scale(-1.0);
        let s = Spectrum::from_parts(&re, &im).unwrap();
        assert_eq!(s.packed().data(), &[1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0]);
        assert_eq!(s.re().unwrap().data(), re.data());
        assert_eq!(s.im().unwrap().data(), im.data());
        assert_eq!(s.bin(0, 1, 0), Complex64::new(3.0, -3.0));
    }
}
