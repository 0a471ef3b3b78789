use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ImageBuffer;
use crate::error::{Error, Result};

/// One of the 8 symmetries of the square: `rot` quarter turns
/// counter-clockwise after an optional horizontal flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dihedral {
    pub flip: bool,
    pub rot: u8,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral { flip: false, rot: 0 };

    pub fn all() -> impl Iterator<Item = Dihedral> {
        (0..8).map(Dihedral::from_index)
    }

    pub fn from_index(i: u8) -> Dihedral {
        Dihedral {
            flip: i >= 4,
            rot: i % 4,
        }
    }

    pub fn apply(self, img: &ImageBuffer) -> Result<ImageBuffer> {
        let (h, w) = (img.height, img.width);
        if self.rot % 2 == 1 && h != w {
            return Err(Error::contract(
                "augment",
                format!("quarter turn of a non-square {h}x{w} patch"),
            ));
        }
        let mut out = img.clone();
        for c in 0..img.channels {
            let src = &img.data[c * h * w..(c + 1) * h * w];
            let dst = &mut out.data[c * h * w..(c + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    let x0 = if self.flip { w - 1 - x } else { x };
                    // (y, x0) is rotated `rot` quarter turns counter-clockwise
                    let (ty, tx) = match self.rot % 4 {
                        0 => (y, x0),
                        1 => (w - 1 - x0, y),
                        2 => (h - 1 - y, w - 1 - x0),
                        _ => (x0, h - 1 - y),
                    };
                    dst[ty * w + tx] = src[y * w + x];
                }
            }
        }
        Ok(out)
    }
}

/// Applies one uniformly drawn transform to both members of the pair.
pub fn augment(pair: (&ImageBuffer, &ImageBuffer), seed: u64) -> Result<(ImageBuffer, ImageBuffer)> {
    let t = Dihedral::from_index(ChaCha8Rng::seed_from_u64(seed).random_range(0..8));
    Ok((t.apply(pair.0)?, t.apply(pair.1)?))
}
