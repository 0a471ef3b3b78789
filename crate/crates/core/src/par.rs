//! Data-parallel helpers.
//!
//! With the `parallel` feature these dispatch to rayon; without it they run
//! the same closures sequentially. Every helper assigns each output element to
//! exactly one closure invocation, so results do not depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many scalar elements the sequential path is used.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_LEN: usize = 1 << 14;

/// Calls `f(chunk_index, chunk)` for consecutive `chunk_len`-sized pieces of `data`.
pub fn for_each_chunk<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    {
        if data.len() >= MIN_PARALLEL_LEN && data.len() > chunk_len {
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Elementwise map of `src` into `dst`.
pub fn map_into<T, U, F>(dst: &mut [U], src: &[T], f: F)
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    assert_eq!(dst.len(), src.len());
    #[cfg(feature = "parallel")]
    {
        if dst.len() >= MIN_PARALLEL_LEN {
            dst.par_iter_mut()
                .zip(src.par_iter())
                .for_each(|(d, s)| *d = f(s));
            return;
        }
    }
    dst.iter_mut().zip(src).for_each(|(d, s)| *d = f(s));
}

/// Evaluates `f(i)` for `i in 0..n` and collects the results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if n > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
