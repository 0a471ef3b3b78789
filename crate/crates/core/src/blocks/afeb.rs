use crate::error::{Error, Result};
use crate::fft::{fft2, ifft2};
use crate::tensor::{Element, Tensor};

use super::attention::Attention;
use super::mask::adaptive_frequency_mask;
use super::params::{Builder, Conv, ParamId, ParamStore};
use super::BlockToggles;

/// Hidden width of the per-branch MLP relative to the channel count.
const MLP_RATIO: usize = 2;

#[derive(Clone, Debug)]
struct Enhance {
    fc1: Conv,
    fc2: Conv,
    tsa: Attention,
}

/// Adaptive frequency enhancement block.
///
/// `x = relu(conv3×3(F))` is taken to the frequency domain and split by a
/// learnable centered rectangle into low and high bands. Each band returns to
/// the spatial domain, passes an MLP and channel attention, and the bands are
/// summed. The block output is `F + conv1×1(bands + x)`.
#[derive(Clone, Debug)]
pub struct Afeb {
    pub channels: usize,
    conv_in: Conv,
    theta: Option<(ParamId, ParamId)>,
    branches: Vec<Option<Enhance>>,
    merge: Conv,
}

/// Intermediate tensors of one AFEB call.
pub struct AfebParts<T: Element> {
    /// Post-ReLU convolution features.
    pub features: Tensor<T>,
    /// Spatial band signals straight after the inverse transform.
    pub bands: Vec<Tensor<T>>,
    /// Band signals after enhancement (same as `bands` when it is off).
    pub enhanced: Vec<Tensor<T>>,
    pub output: Tensor<T>,
}

impl Afeb {
    pub fn build<T: Element>(
        b: &mut Builder<'_, T>,
        c: usize,
        heads: usize,
        toggles: BlockToggles,
    ) -> Result<Self> {
        let conv_in = b.conv("conv_in", c, c, 3, 1)?;
        let (theta, names): (_, &[&str]) = if toggles.use_separation {
            let th = b.constant("theta_h", &[1], 0.0)?;
            let tw = b.constant("theta_w", &[1], 0.0)?;
            (Some((th, tw)), &["low", "high"])
        } else {
            (None, &["full"])
        };
        let mut branches = Vec::new();
        for name in names {
            branches.push(if toggles.use_enhancement {
                let mut bb = b.sub(name);
                Some(Enhance {
                    fc1: bb.conv("fc1", c, MLP_RATIO * c, 1, 1)?,
                    fc2: bb.conv("fc2", MLP_RATIO * c, c, 1, 1)?,
                    tsa: Attention::build(&mut bb.sub("tsa"), c, heads)?,
                })
            } else {
                None
            });
        }
        let merge = b.conv("merge", c, c, 1, 1)?;
        Ok(Afeb {
            channels: c,
            conv_in,
            theta,
            branches,
            merge,
        })
    }

    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, f: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_parts(ps, f)?.output)
    }

    pub fn forward_parts<T: Element>(&self, ps: &ParamStore<T>, f: &Tensor<T>) -> Result<AfebParts<T>> {
        if f.rank() != 4 || f.dim(1) != self.channels {
            return Err(Error::ShapeMismatch {
                op: "afeb",
                axis: 1,
                expected: self.channels,
                got: if f.rank() > 1 { f.dim(1) } else { 0 },
            });
        }
        let x = self.conv_in.forward(ps, f)?.relu();
        let spec = fft2(&x)?;
        let spectra = match self.theta {
            Some((th, tw)) => {
                let (low, high) = adaptive_frequency_mask(&spec, ps.get(th), ps.get(tw))?;
                vec![low, high]
            }
            None => vec![spec],
        };
        let mut bands = Vec::with_capacity(spectra.len());
        let mut enhanced = Vec::with_capacity(spectra.len());
        for (s, branch) in spectra.iter().zip(&self.branches) {
            let band = ifft2(s)?;
            let e = match branch {
                Some(en) => {
                    let h = en.fc2.forward(ps, &en.fc1.forward(ps, &band)?.gelu())?;
                    en.tsa.forward(ps, &h)?
                }
                None => band.clone(),
            };
            bands.push(band);
            enhanced.push(e);
        }
        let mut combined = enhanced[0].clone();
        for e in &enhanced[1..] {
            combined = combined.add(e)?;
        }
        let m = combined.add(&x)?;
        let output = f.add(&self.merge.forward(ps, &m)?)?;
        Ok(AfebParts {
            features: x,
            bands,
            enhanced,
            output,
        })
    }
}
