//! Images, synthetic noise, patch sampling and training batches.

mod augment;
mod dataset;
mod image_io;
mod manifest;
mod noise;

pub use augment::{augment, Dihedral};
pub use dataset::{list_images, Dataset, Sample};
pub use image_io::{load_image, save_image};
pub use manifest::{DatasetManifest, DatasetMode};
pub use noise::{add_awgn, gaussian_field, mix_seed};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::make_pyramid;
use crate::tensor::{Element, Tensor};

/// Planar `C×H×W` image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if !matches!(channels, 1 | 3) {
            return Err(Error::contract("image", format!("channels must be 1 or 3, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::contract(
                "image",
                format!("{width}x{height}x{channels} image needs {} values, got {}", width * height * channels, data.len()),
            ));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        ImageBuffer {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Copy with every value clamped to `[0, 1]`.
    pub fn clamped(mut self) -> Self {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        self
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::contract(
                "crop",
                format!(
                    "window {height}x{width} at ({top}, {left}) exceeds {}x{} image",
                    self.height, self.width
                ),
            ));
        }
        let mut data = Vec::with_capacity(width * height * self.channels);
        for c in 0..self.channels {
            for y in top..top + height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + left..row + left + width]);
            }
        }
        ImageBuffer::new(width, height, self.channels, data)
    }

    /// `1×C×H×W` tensor.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        Tensor::from_f64(&[1, self.channels, self.height, self.width], &self.data).expect("consistent extents")
    }

    /// Image from the first sample of an `N×C×H×W` tensor.
    pub fn from_tensor<T: Element>(t: &Tensor<T>) -> Result<Self> {
        if t.rank() != 4 {
            return Err(Error::RankMismatch {
                op: "image_from_tensor",
                expected: 4,
                got: t.rank(),
            });
        }
        let (c, h, w) = (t.dim(1), t.dim(2), t.dim(3));
        ImageBuffer::new(w, h, c, t.to_f64_vec()[..c * h * w].to_vec())
    }

    /// Values rounded to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
        out
    }

    /// Single-channel luminance (Rec. 601 weights); gray images are returned as is.
    pub fn to_gray(&self) -> Self {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.plane_len();
        let data = (0..n)
            .map(|i| 0.299 * self.data[i] + 0.587 * self.data[n + i] + 0.114 * self.data[2 * n + i])
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

/// Top-left corner of a uniformly drawn `patch×patch` window.
pub fn patch_corner(height: usize, width: usize, patch: usize, seed: u64) -> Result<(usize, usize)> {
    if patch == 0 || patch > height || patch > width {
        return Err(Error::contract(
            "sample_patch",
            format!("patch {patch} does not fit a {height}x{width} image"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((rng.random_range(0..=height - patch), rng.random_range(0..=width - patch)))
}

/// The same random `patch×patch` window cut from both images.
pub fn sample_patch(
    clean: &ImageBuffer,
    noisy: &ImageBuffer,
    patch: usize,
    seed: u64,
) -> Result<(ImageBuffer, ImageBuffer)> {
    if (clean.width, clean.height, clean.channels) != (noisy.width, noisy.height, noisy.channels) {
        return Err(Error::contract(
            "sample_patch",
            format!(
                "pair extents differ: {}x{}x{} vs {}x{}x{}",
                clean.width, clean.height, clean.channels, noisy.width, noisy.height, noisy.channels
            ),
        ));
    }
    let (top, left) = patch_corner(clean.height, clean.width, patch, seed)?;
    Ok((clean.crop(top, left, patch, patch)?, noisy.crop(top, left, patch, patch)?))
}

/// Supervision targets with the same geometry as the input pyramid.
pub fn make_targets<T: Element>(clean: &Tensor<T>, levels: usize) -> Result<Vec<Tensor<T>>> {
    make_pyramid(clean, levels)
}
