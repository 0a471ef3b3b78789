//! Reflect padding to extents the model's pyramid accepts.

use madnet::data::ImageBuffer;

/// Mirror index for `i` in `0..n` extended without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Smallest multiple of `m` that is at least `n`.
pub fn round_up(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}

/// Pads the bottom and right edges by reflection up to multiples of `multiple`.
pub fn reflect_pad(img: &ImageBuffer, multiple: usize) -> ImageBuffer {
    let (h, w) = (img.height, img.width);
    let (ph, pw) = (round_up(h, multiple), round_up(w, multiple));
    if (ph, pw) == (h, w) {
        return img.clone();
    }
    let mut data = Vec::with_capacity(img.channels * ph * pw);
    for c in 0..img.channels {
        for y in 0..ph {
            let sy = reflect(y, h);
            for x in 0..pw {
                data.push(img.at(c, sy, reflect(x, w)));
            }
        }
    }
    ImageBuffer {
        width: pw,
        height: ph,
        channels: img.channels,
        data,
    }
}
