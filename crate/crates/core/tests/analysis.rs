use madnet::analysis::{analyze_scales, freq_swap};
use madnet::data::{add_awgn, ImageBuffer};
use madnet::Error;

/// Smooth two-tone pattern with structure at a few low frequencies.
fn smooth(w: usize, h: usize) -> ImageBuffer {
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 / w as f64, y as f64 / h as f64);
            let v = 0.5 + 0.25 * (6.3 * fx).sin() * (4.1 * fy).cos() + 0.15 * (fx + fy - 1.0);
            data.push(v);
        }
    }
    ImageBuffer::new(w, h, 1, data).unwrap()
}

fn energy(packed: &[f64]) -> f64 {
    packed.iter().map(|v| v * v).sum()
}

#[test]
fn scale_rows_follow_halving_and_psnr_rises() {
    let a = analyze_scales(&smooth(100, 99), 25.0, 4, 11).unwrap();
    assert_eq!((a.height, a.width), (96, 96));
    let scales: Vec<f64> = a.rows.iter().map(|r| r.scale).collect();
    assert_eq!(scales, [1.0, 0.5, 0.25, 0.125]);
    for w in a.rows.windows(2) {
        assert!(w[1].psnr > w[0].psnr, "{:?}", a.rows);
        assert!(w[1].ssim > w[0].ssim, "{:?}", a.rows);
    }
    assert!(a.trend_non_decreasing());
    assert!(a.table().starts_with("Scale"));
    assert_eq!(a.csv().lines().count(), 5);
}

#[test]
fn finest_row_matches_direct_noise_mse() {
    let clean = smooth(96, 96);
    let a = analyze_scales(&clean, 25.0, 4, 5).unwrap();
    let noisy = add_awgn(&clean, 25.0, 5);
    let direct: f64 = noisy
        .data
        .iter()
        .zip(&clean.data)
        .map(|(n, c)| (n - c) * (n - c))
        .sum::<f64>()
        / clean.data.len() as f64;
    assert!((a.rows[0].mse - direct).abs() <= 1e-15);
    // white noise of variance σ² loses a factor of 4 per halving
    let s2 = (25.0f64 / 255.0).powi(2);
    assert!((a.rows[0].mse / s2 - 1.0).abs() < 0.05);
    assert!((a.rows[1].mse * 4.0 / s2 - 1.0).abs() < 0.15);
}

#[test]
fn vanishing_noise_gives_huge_psnr() {
    let a = analyze_scales(&smooth(96, 96), 1e-9, 4, 2).unwrap();
    for r in &a.rows {
        assert!(r.psnr > 150.0 && r.mse < 1e-15, "{r:?}");
    }
}

#[test]
fn too_small_for_coarsest_level_is_rejected() {
    // 80 / 8 = 10 < 11-pixel SSIM window
    assert!(matches!(
        analyze_scales(&smooth(80, 80), 25.0, 4, 0),
        Err(Error::Contract { .. })
    ));
    assert!(analyze_scales(&smooth(88, 88), 25.0, 4, 0).is_ok());
    assert!(analyze_scales(&smooth(96, 96), 0.0, 4, 0).is_err());
}

#[test]
fn swap_spectra_sum_bin_exact_and_conserve_energy() {
    let clean = smooth(48, 40);
    let noisy = add_awgn(&clean, 25.0, 3);
    let s = freq_swap(&clean, &noisy, 0.125).unwrap().spectra;
    let (c, d) = (s.clean.packed().data(), s.degraded.packed().data());
    let (h1, h2) = (s.clean_low.packed().data(), s.degraded_low.packed().data());
    for k in 0..c.len() {
        assert_eq!(h1[k] + h2[k], c[k] + d[k], "bin {k}");
    }
    let (before, after) = (energy(&c) + energy(&d), energy(&h1) + energy(&h2));
    assert!((after - before).abs() <= 1e-9 * before);
    // ratio 0.125 of the half extents 20 and 24 keeps |du| ≤ 2.5, |dv| ≤ 3
    assert_eq!(s.support.iter().filter(|&&b| b).count(), 5 * 7);
}

#[test]
fn identical_inputs_give_the_clean_image_back() {
    let clean = smooth(32, 24);
    let sw = freq_swap(&clean, &clean, 0.125).unwrap();
    for img in [&sw.clean_low, &sw.degraded_low] {
        let err = img.data.iter().zip(&clean.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "{err}");
    }
}

#[test]
fn full_ratio_swaps_the_originals() {
    let clean = smooth(32, 24);
    let noisy = add_awgn(&clean, 25.0, 8);
    let sw = freq_swap(&clean, &noisy, 1.0).unwrap();
    assert!(sw.spectra.support.iter().all(|&b| b));
    for (img, want) in [(&sw.clean_low, &clean), (&sw.degraded_low, &noisy)] {
        let err = img.data.iter().zip(&want.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-12, "{err}");
    }
    assert!((sw.psnr_degraded_low - sw.psnr_degraded).abs() < 1e-6);
}

#[test]
fn extent_mismatch_and_bad_ratio_fail() {
    let a = smooth(16, 16);
    assert!(freq_swap(&a, &smooth(16, 12), 0.1).is_err());
    assert!(freq_swap(&a, &a, 1.5).is_err());
}
