use super::ImageBuffer;
use crate::par;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a sequence of words into one seed.
pub fn mix_seed(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Uniform in `(0, 1]` from the 53 high bits.
fn unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `n` i.i.d. standard normal draws; draw `i` depends only on `(seed, i)`.
///
/// Pair `k` takes two uniforms from counters `2k` and `2k + 1` of a
/// splitmix64 stream keyed by `seed` and applies Box–Muller.
pub fn gaussian_field(n: usize, seed: u64) -> Vec<f64> {
    const CHUNK: usize = 4096;
    let key = splitmix64(seed);
    let mut out = vec![0.0; n];
    par::for_each_chunk(&mut out, CHUNK, |ci, chunk| {
        let start = ci * CHUNK;
        for (j, slot) in chunk.iter_mut().enumerate() {
            let i = (start + j) as u64;
            let k = i / 2;
            let u1 = unit(splitmix64(key ^ (2 * k).wrapping_mul(GOLDEN)));
            let u2 = unit(splitmix64(key ^ (2 * k + 1).wrapping_mul(GOLDEN)));
            let r = (-2.0 * u1.ln()).sqrt();
            let phi = std::f64::consts::TAU * u2;
            *slot = if i % 2 == 0 { r * phi.cos() } else { r * phi.sin() };
        }
    });
    out
}

/// `clamp(x + n, 0, 1)` with `n ~ N(0, (σ/255)²)` per element.
pub fn add_awgn(x: &ImageBuffer, sigma_255: f64, seed: u64) -> ImageBuffer {
    let mut out = x.clone();
    if sigma_255 == 0.0 {
        return out;
    }
    let s = sigma_255 / 255.0;
    let noise = gaussian_field(x.data.len(), seed);
    out.data
        .iter_mut()
        .zip(&noise)
        .for_each(|(v, n)| *v = (*v + s * n).clamp(0.0, 1.0));
    out
}
