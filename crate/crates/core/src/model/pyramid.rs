use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Image pyramid by repeated 2× bilinear halving; level 0 is `x` itself.
///
/// Each halving with half-pixel centers averages a 2×2 block, so noise
/// variance drops by 4 per level. A single resize straight from level 0
/// would sample only 2×2 of every 4×4 block at deeper levels.
pub fn make_pyramid<T: Element>(x: &Tensor<T>, levels: usize) -> Result<Vec<Tensor<T>>> {
    const OP: &str = "make_pyramid";
    if x.rank() != 4 {
        return Err(Error::RankMismatch {
            op: OP,
            expected: 4,
            got: x.rank(),
        });
    }
    if levels == 0 {
        return Err(Error::contract(OP, "levels must be at least 1"));
    }
    let (h, w) = (x.dim(2), x.dim(3));
    let f = 1usize << (levels - 1);
    if h % f != 0 || w % f != 0 {
        return Err(Error::contract(
            OP,
            format!("{h}x{w} is not divisible by 2^{} = {f}", levels - 1),
        ));
    }
    let mut out = vec![x.clone()];
    for _ in 1..levels {
        let prev = out.last().unwrap();
        let next = prev.resize_bilinear(prev.dim(2) / 2, prev.dim(3) / 2)?;
        out.push(next);
    }
    Ok(out)
}
