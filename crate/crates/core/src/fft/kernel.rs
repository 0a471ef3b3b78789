//! One-dimensional complex transforms.
//!
//! Power-of-two lengths run an iterative radix-2 Cooley–Tukey; every other
//! length is reduced to a power-of-two circular convolution with Bluestein's
//! chirp-z identity. Plans are cached per length and shared between threads.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

enum Plan {
    Trivial,
    Radix2 {
        twiddles: Vec<Complex64>,
        rev: Vec<usize>,
    },
    Bluestein {
        m: usize,
        chirp: Vec<Complex64>,
        kernel_hat: Vec<Complex64>,
        inner: Arc<Plan>,
    },
}

fn cache() -> &'static Mutex<HashMap<usize, Arc<Plan>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plan>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn plan(n: usize) -> Arc<Plan> {
    if let Some(p) = cache().lock().unwrap().get(&n) {
        return p.clone();
    }
    let p = Arc::new(build(n));
    cache().lock().unwrap().entry(n).or_insert(p).clone()
}

fn build(n: usize) -> Plan {
    if n <= 1 {
        return Plan::Trivial;
    }
    if n.is_power_of_two() {
        let bits = n.trailing_zeros();
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        let rev = (0..n)
            .map(|i| i.reverse_bits() >> (usize::BITS - bits))
            .collect();
        return Plan::Radix2 { twiddles, rev };
    }
    let m = (2 * n - 1).next_power_of_two();
    // w_k = exp(-iπk²/n); k² is reduced mod 2n so the angle stays small
    let chirp: Vec<Complex64> = (0..n)
        .map(|k| {
            let k2 = (k as u128 * k as u128 % (2 * n) as u128) as f64;
            Complex64::from_polar(1.0, -PI * k2 / n as f64)
        })
        .collect();
    let mut kernel = vec![Complex64::new(0.0, 0.0); m];
    kernel[0] = chirp[0].conj();
    for k in 1..n {
        kernel[k] = chirp[k].conj();
        kernel[m - k] = chirp[k].conj();
    }
    let inner = plan(m);
    run(&inner, &mut kernel);
    Plan::Bluestein {
        m,
        chirp,
        kernel_hat: kernel,
        inner,
    }
}

/// Unnormalized forward transform with `exp(-2πi·jk/n)` in place.
fn run(plan: &Plan, x: &mut [Complex64]) {
    match plan {
        Plan::Trivial => {}
        Plan::Radix2 { twiddles, rev } => {
            let n = x.len();
            for i in 0..n {
                let j = rev[i];
                if i < j {
                    x.swap(i, j);
                }
            }
            let mut len = 2;
            while len <= n {
                let half = len / 2;
                let step = n / len;
                for start in (0..n).step_by(len) {
                    for j in 0..half {
                        let w = twiddles[j * step];
                        let a = x[start + j];
                        let b = x[start + j + half] * w;
                        x[start + j] = a + b;
                        x[start + j + half] = a - b;
                    }
                }
                len <<= 1;
            }
        }
        Plan::Bluestein {
            m,
            chirp,
            kernel_hat,
            inner,
        } => {
            let n = x.len();
            let mut a = vec![Complex64::new(0.0, 0.0); *m];
            for k in 0..n {
                a[k] = x[k] * chirp[k];
            }
            run(inner, &mut a);
            for (ai, &b) in a.iter_mut().zip(kernel_hat) {
                *ai = (*ai * b).conj();
            }
            // inverse via conjugation: ifft(y) = conj(fft(conj(y))) / m
            run(inner, &mut a);
            let inv_m = 1.0 / *m as f64;
            for k in 0..n {
                x[k] = a[k].conj() * inv_m * chirp[k];
            }
        }
    }
}

/// Unnormalized 1D transform of `x`; `inverse` flips the exponent sign.
pub fn transform(x: &mut [Complex64], inverse: bool) {
    let p = plan(x.len());
    if inverse {
        x.iter_mut().for_each(|v| *v = v.conj());
        run(&p, x);
        x.iter_mut().for_each(|v| *v = v.conj());
    } else {
        run(&p, x);
    }
}

/// Orthonormal 2D transform of a row-major `h×w` plane in place.
///
/// Both directions are scaled by `1/√(hw)`, so the pair is unitary.
pub fn transform2(plane: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    assert_eq!(plane.len(), h * w);
    for row in plane.chunks_mut(w) {
        transform(row, inverse);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = plane[r * w + c];
        }
        transform(&mut col, inverse);
        for r in 0..h {
            plane[r * w + c] = col[r];
        }
    }
    let s = 1.0 / ((h * w) as f64).sqrt();
    plane.iter_mut().for_each(|v| *v *= s);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (j, &v)| {
                    let ang = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                    acc + v * Complex64::from_polar(1.0, ang)
                })
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_many_lengths() {
        for n in [1, 2, 3, 5, 7, 8, 10, 12, 16, 17, 31, 64, 100] {
            let x: Vec<Complex64> = (0..n)
                .map(|i| Complex64::new((i as f64 * 1.7).sin(), (i as f64 * 0.3).cos()))
                .collect();
            let mut y = x.clone();
            transform(&mut y, false);
            for (a, b) in y.iter().zip(naive(&x)) {
                assert!((a - b).norm() < 1e-10 * n as f64, "n={n}");
            }
            transform(&mut y, true);
            for (a, b) in y.iter().zip(&x) {
                assert!((a / n as f64 - b).norm() < 1e-12, "n={n}");
            }
        }
    }
}
