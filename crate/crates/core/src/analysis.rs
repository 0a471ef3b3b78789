//! Scale-degradation and frequency-swap experiments on single images.

use crate::blocks::mask_support;
use crate::data::{add_awgn, ImageBuffer};
use crate::error::{Error, Result};
use crate::fft::{fft2, ifft2, Spectrum};
use crate::metrics::{mse, psnr_from_mse, ssim, SSIM_WINDOW};
use crate::model::make_pyramid;
use crate::tensor::Tensor;

/// Metrics between the clean and noisy image at one pyramid level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleRow {
    /// Resolution relative to the input (1, 0.5, ...).
    pub scale: f64,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Result of [`analyze_scales`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleAnalysis {
    pub rows: Vec<ScaleRow>,
    /// Extent actually analyzed after cropping to a multiple of `2^(levels−1)`.
    pub height: usize,
    pub width: usize,
}

impl ScaleAnalysis {
    /// PSNR never drops toward coarser scales.
    pub fn trend_non_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].psnr >= w[0].psnr)
    }

    /// Rows in the `Scale MSE PSNR SSIM` layout.
    pub fn table(&self) -> String {
        let mut s = format!("{:<8}{:>12}{:>10}{:>9}\n", "Scale", "MSE", "PSNR", "SSIM");
        for r in &self.rows {
            s.push_str(&format!("{:<8}{:>12.4e}{:>10.2}{:>9.4}\n", r.scale, r.mse, r.psnr, r.ssim));
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("scale,mse,psnr,ssim\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.scale, r.mse, r.psnr, r.ssim));
        }
        s
    }
}

/// Adds AWGN of level `sigma_255` to `clean`, downsamples both images with
/// the model's pyramid operator and compares them at every level.
///
/// The image is cropped at the bottom and right to a multiple of
/// `2^(levels−1)`; the coarsest level must still hold an SSIM window.
pub fn analyze_scales(clean: &ImageBuffer, sigma_255: f64, levels: usize, seed: u64) -> Result<ScaleAnalysis> {
    const OP: &str = "analyze_scales";
    if levels == 0 {
        return Err(Error::contract(OP, "levels must be at least 1"));
    }
    if !(sigma_255 > 0.0) {
        return Err(Error::contract(OP, format!("sigma must be positive, got {sigma_255}")));
    }
    let f = 1usize << (levels - 1);
    let (h, w) = (clean.height / f * f, clean.width / f * f);
    if h / f < SSIM_WINDOW || w / f < SSIM_WINDOW {
        return Err(Error::contract(
            OP,
            format!(
                "{}x{} image is too small: level {} must be at least {SSIM_WINDOW}x{SSIM_WINDOW}",
                clean.height,
                clean.width,
                levels - 1
            ),
        ));
    }
    let clean = clean.crop(0, 0, h, w)?;
    let noisy = add_awgn(&clean, sigma_255, seed);
    let pc = make_pyramid(&clean.to_tensor::<f64>(), levels)?;
    let pn = make_pyramid(&noisy.to_tensor::<f64>(), levels)?;
    let rows = pc
        .iter()
        .zip(&pn)
        .enumerate()
        .map(|(i, (c, n))| {
            let m = mse(n, c)?;
            Ok(ScaleRow {
                scale: 1.0 / f64::from(1u32 << i),
                mse: m,
                psnr: psnr_from_mse(m, 1.0),
                ssim: ssim(n, c)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ScaleAnalysis { rows, height: h, width: w })
}

/// Output of [`freq_swap`].
#[derive(Clone, Debug)]
pub struct FreqSwap {
    /// Clean low band with the degraded high band.
    pub clean_low: ImageBuffer,
    /// Degraded low band with the clean high band.
    pub degraded_low: ImageBuffer,
    pub spectra: SwapSpectra,
    pub psnr_degraded: f64,
    pub psnr_clean_low: f64,
    pub psnr_degraded_low: f64,
}

/// Spectra of the inputs and of both hybrids.
#[derive(Clone, Debug)]
pub struct SwapSpectra {
    pub clean: Spectrum<f64>,
    pub degraded: Spectrum<f64>,
    pub clean_low: Spectrum<f64>,
    pub degraded_low: Spectrum<f64>,
    /// Low-pass support per bin of one plane, DC at the origin.
    pub support: Vec<bool>,
}

impl FreqSwap {
    pub fn report(&self) -> String {
        format!(
            "image                      PSNR vs clean (dB)\n\
             degraded                   {:.2}\n\
             clean lows + noisy highs   {:.2}\n\
             noisy lows + clean highs   {:.2}\n",
            self.psnr_degraded, self.psnr_clean_low, self.psnr_degraded_low
        )
    }
}

fn psnr_images(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(psnr_from_mse(mse(&a.to_tensor::<f64>(), &b.to_tensor::<f64>())?, 1.0))
}

/// Exchanges the centered low-frequency rectangles of two images.
///
/// The rectangle spans `|du| ≤ ratio·⌊H/2⌋`, `|dv| ≤ ratio·⌊W/2⌋`. Hybrids
/// are real parts of the inverse transforms, unclamped.
pub fn freq_swap(clean: &ImageBuffer, degraded: &ImageBuffer, ratio: f64) -> Result<FreqSwap> {
    const OP: &str = "freq_swap";
    if (clean.width, clean.height, clean.channels) != (degraded.width, degraded.height, degraded.channels) {
        return Err(Error::contract(
            OP,
            format!(
                "extents differ: {}x{}x{} vs {}x{}x{}",
                clean.height, clean.width, clean.channels, degraded.height, degraded.width, degraded.channels
            ),
        ));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::contract(OP, format!("ratio must lie in [0, 1], got {ratio}")));
    }
    let (h, w) = (clean.height, clean.width);
    let sc = fft2(&clean.to_tensor::<f64>())?;
    let sd = fft2(&degraded.to_tensor::<f64>())?;
    let support = mask_support(h, w, ratio * (h / 2) as f64, ratio * (w / 2) as f64);
    let mix = |low: &Spectrum<f64>, high: &Spectrum<f64>| -> Result<Spectrum<f64>> {
        let (l, hi) = (low.packed().data(), high.packed().data());
        let data: Vec<f64> = (0..l.len())
            .map(|k| if support[(k / 2) % (h * w)] { l[k] } else { hi[k] })
            .collect();
        Spectrum::from_packed(Tensor::from_vec(low.packed().shape(), data)?)
    };
    let s1 = mix(&sc, &sd)?;
    let s2 = mix(&sd, &sc)?;
    let to_img = |s: &Spectrum<f64>| ImageBuffer::from_tensor(&ifft2(s)?);
    let clean_low = to_img(&s1)?;
    let degraded_low = to_img(&s2)?;
    Ok(FreqSwap {
        psnr_degraded: psnr_images(degraded, clean)?,
        psnr_clean_low: psnr_images(&clean_low, clean)?,
        psnr_degraded_low: psnr_images(&degraded_low, clean)?,
        clean_low,
        degraded_low,
        spectra: SwapSpectra {
            clean: sc,
            degraded: sd,
            clean_low: s1,
            degraded_low: s2,
            support,
        },
    })
}
