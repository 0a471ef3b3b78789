use std::f64::consts::PI;

use madnet::fft::{fft2, fftshift_coords, ifft2, Spectrum};
use madnet::tensor::grad_check;
use madnet::Tensor;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct double sum over all pixels for every bin, scaled by 1/√(HW).
fn naive_dft(x: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let s = 1.0 / ((h * w) as f64).sqrt();
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..h {
                for x_ in 0..w {
                    let ang = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * x_) as f64 / w as f64);
                    acc += x[y * w + x_] * Complex64::from_polar(1.0, ang);
                }
            }
            out.push(acc * s);
        }
    }
    out
}

#[test]
fn matches_naive_dft_on_12x10() {
    let x = random(&[1, 1, 12, 10], 3);
    let s = fft2(&x).unwrap();
    let oracle = naive_dft(x.data(), 12, 10);
    for u in 0..12 {
        for v in 0..10 {
            let d = (s.bin(0, u, v) - oracle[u * 10 + v]).norm();
            assert!(d <= 1e-10, "bin ({u},{v}) off by {d}");
        }
    }
}

#[test]
fn delta_gives_flat_spectrum() {
    let mut d = vec![0.0; 16];
    d[0] = 1.0;
    let s = fft2(&Tensor::<f64>::from_vec(&[1, 1, 4, 4], d).unwrap()).unwrap();
    for u in 0..4 {
        for v in 0..4 {
            assert!((s.bin(0, u, v) - Complex64::new(0.25, 0.0)).norm() < 1e-15);
        }
    }
}

#[test]
fn constant_image_has_only_dc() {
    let c = 0.37;
    let s = fft2(&Tensor::<f64>::full(&[1, 1, 8, 8], c)).unwrap();
    assert!((s.bin(0, 0, 0) - Complex64::new(c * 8.0, 0.0)).norm() < 1e-13);
    for u in 0..8 {
        for v in 0..8 {
            if (u, v) != (0, 0) {
                assert!(s.bin(0, u, v).norm() < 1e-13);
            }
        }
    }
}

#[test]
fn dc_only_spectrum_inverts_to_constant() {
    let mut re = vec![0.0; 16];
    re[0] = 2.0;
    let s = Spectrum::from_parts(
        &Tensor::<f64>::from_vec(&[1, 1, 4, 4], re).unwrap(),
        &Tensor::zeros(&[1, 1, 4, 4]),
    )
    .unwrap();
    let x = ifft2(&s).unwrap();
    assert!(x.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
}

#[test]
fn roundtrip_and_parseval() {
    for (shape, seed) in [([2, 3, 16, 16], 1), ([1, 2, 12, 10], 2), ([1, 1, 7, 9], 3)] {
        let x = random(&shape, seed);
        let s = fft2(&x).unwrap();
        let y = ifft2(&s).unwrap();
        let err = x.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "roundtrip error {err}");
        let e_x: f64 = x.data().iter().map(|v| v * v).sum();
        let e_s: f64 = s.packed().data().iter().map(|v| v * v).sum();
        assert!((e_x - e_s).abs() / e_x <= 1e-9);
    }
}

#[test]
fn roundtrip_imaginary_residue_is_negligible() {
    let x = random(&[1, 1, 16, 16], 9);
    let s = fft2(&x).unwrap();
    let mut buf: Vec<Complex64> = (0..256).map(|i| s.bin(0, i / 16, i % 16)).collect();
    madnet::fft::transform2(&mut buf, 16, 16, true);
    assert!(buf.iter().all(|z| z.im.abs() <= 1e-10));
}

#[test]
fn unitary_inner_product_and_linearity() {
    let (x, y) = (random(&[1, 1, 12, 10], 4), random(&[1, 1, 12, 10], 5));
    let (sx, sy) = (fft2(&x).unwrap(), fft2(&y).unwrap());
    let spatial: f64 = x.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
    let mut freq = Complex64::new(0.0, 0.0);
    for u in 0..12 {
        for v in 0..10 {
            freq += sx.bin(0, u, v) * sy.bin(0, u, v).conj();
        }
    }
    assert!((freq.re - spatial).abs() <= 1e-9 * spatial.abs().max(1.0));
    assert!(freq.im.abs() <= 1e-9);

    let (a, b) = (1.5, -0.25);
    let combo = x.scale(a).add(&y.scale(b)).unwrap();
    let sc = fft2(&combo).unwrap();
    for (l, (p, q)) in sc.packed().data().iter().zip(sx.packed().data().iter().zip(sy.packed().data())) {
        assert!((l - (a * p + b * q)).abs() <= 1e-10);
    }
}

/// Central-difference gradient of a scalar function of one tensor.
fn numeric_grad(f: impl Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, h: f64) -> Vec<f64> {
    (0..x.numel())
        .map(|j| {
            let bump = |d: f64| {
                let mut v = x.to_vec();
                v[j] += d;
                f(&Tensor::from_vec(x.shape(), v).unwrap())
            };
            (bump(h) - bump(-h)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn real_sum_gradient_is_scaled_origin_delta() {
    // sum over all bins of Re S = √(HW)·x[0,0], so the gradient is √(HW) at the
    // origin and exactly zero elsewhere
    for seed in 0..5 {
        let x = random(&[1, 1, 6, 5], seed);
        let p = x.detach().into_param();
        fft2(&p).unwrap().re().unwrap().sum().backward().unwrap();
        let g = p.grad().unwrap();
        let peak = 30f64.sqrt();
        assert!((g[0] - peak).abs() <= 1e-12);
        assert!(g[1..].iter().all(|v| v.abs() <= 1e-12));

        let num = numeric_grad(|t| fft2(t).unwrap().re().unwrap().sum().item(), &x, 1e-5);
        assert!((num[0] - peak).abs() / peak <= 1e-5);
        assert!(num[1..].iter().all(|v| v.abs() <= 1e-9));
    }
}

#[test]
fn ifft2_gradient_matches_dense_jacobian() {
    // x = Re(conj(F)·S) with F the orthonormal DFT matrix; dL/dRe S = Re(F)ᵀg, dL/dIm S = Im(F)ᵀg
    let (h, w) = (6, 5);
    let n = h * w;
    let fmat = |a: usize, b: usize| {
        let (u, v, y, x) = (a / w, a % w, b / w, b % w);
        let ang = -2.0 * PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
        Complex64::from_polar(1.0 / (n as f64).sqrt(), ang)
    };
    let re = random(&[1, 1, h, w], 21).into_param();
    let im = random(&[1, 1, h, w], 22).into_param();
    let wts = random(&[1, 1, h, w], 23);
    let s = Spectrum::from_parts(&re, &im).unwrap();
    ifft2(&s).unwrap().mul(&wts).unwrap().sum().backward().unwrap();
    let (gr, gi) = (re.grad().unwrap(), im.grad().unwrap());
    for a in 0..n {
        let er: f64 = (0..n).map(|b| fmat(a, b).re * wts.data()[b]).sum();
        let ei: f64 = (0..n).map(|b| fmat(a, b).im * wts.data()[b]).sum();
        assert!((gr[a] - er).abs() <= 1e-12 && (gi[a] - ei).abs() <= 1e-12, "bin {a}");
    }
}

#[test]
fn gradients_match_finite_differences() {
    // unit-scale roundoff (~1e-10) in the central difference would swamp the 1e-8
    // denominator floor at structurally zero entries, so inputs are scaled down
    for seed in 0..5 {
        let x = random(&[1, 2, 6, 5], seed).scale(1e-3);
        let w = random(&[1, 2, 6, 5], seed + 100);
        let err = grad_check(
            |t| {
                let s = fft2(&t[0]).unwrap();
                let re = s.re().unwrap().mul(&t[1]).unwrap();
                let im = s.im().unwrap().square();
                re.add(&im).unwrap().sum()
            },
            &[x.clone(), w.clone()],
            1e-5,
        );
        assert!(err <= 1e-5, "fft2: {err}");
        let err = grad_check(
            |t| {
                let s = Spectrum::from_parts(&t[0], &t[1]).unwrap();
                ifft2(&s).unwrap().square().sum()
            },
            &[x.clone(), x.scale(0.7)],
            1e-5,
        );
        assert!(err <= 1e-5, "ifft2: {err}");
        // the modulus has no structurally zero derivatives, so unit scale is used
        let err = grad_check(|t| fft2(&t[0]).unwrap().abs().sum(), &[x.scale(1e3)], 1e-5);
        assert!(err <= 1e-4, "abs: {err}");
    }
}

#[test]
fn offsets_symmetric_except_nyquist() {
    for n in 1..10usize {
        let g = fftshift_coords(n, 1);
        let mut offs: Vec<i64> = (0..n).map(|u| g.du(u)).collect();
        let lo = -((n as i64 + 1) / 2) + 1;
        assert!(offs.iter().all(|&d| d >= lo && d <= n as i64 / 2));
        if n % 2 == 0 {
            offs.retain(|&d| d != n as i64 / 2);
        }
        let mut neg: Vec<i64> = offs.iter().map(|d| -d).collect();
        offs.sort();
        neg.sort();
        assert_eq!(offs, neg, "n={n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn real_inputs_have_hermitian_spectra(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
        let x = random(&[1, 1, h, w], seed);
        let s = fft2(&x).unwrap();
        prop_assert!(s.hermitian_error() <= 1e-9);
    }

    #[test]
    fn roundtrip_any_extent(h in 1usize..20, w in 1usize..20, seed in any::<u64>()) {
        let x = random(&[1, 1, h, w], seed);
        let y = ifft2(&fft2(&x).unwrap()).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}
