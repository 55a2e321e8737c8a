//! Data-parallel execution helpers.
//!
//! Every hot loop in the crate funnels through these functions so the whole
//! workspace can be built with or without rayon. With the `parallel` feature
//! (the default) the work is spread across the thread pool; without it the
//! same closures run sequentially. Results are assembled in index order
//! either way, so outputs are identical bit for bit and independent of the
//! number of worker threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential twin of [`map_indexed`], kept unconditionally compiled so
/// benchmarks can compare the two paths in one binary.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Splits `0..n` into at most `chunks` contiguous ranges of near-equal size.
///
/// The chunk layout depends only on `n` and `chunks`, never on the thread
/// count, which keeps chunked reductions deterministic.
pub fn fixed_chunks(n: usize, chunks: usize) -> Vec<std::ops::Range<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let chunks = chunks.clamp(1, n);
    let base = n / chunks;
    let extra = n % chunks;
    let mut ranges = Vec::with_capacity(chunks);
    let mut start = 0;
    for i in 0..chunks {
        let len = base + usize::from(i < extra);
        ranges.push(start..start + len);
        start += len;
    }
    ranges
}

/// Maps `f` over fixed chunk ranges of `0..n` and returns the per-chunk
/// results in chunk order. Used for reductions: each chunk accumulates
/// sequentially, the caller folds the (few) partials in order.
pub fn map_chunks<T, F>(n: usize, chunks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let ranges = fixed_chunks(n, chunks);
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

/// Chunk count for batch reductions. Fixed rather than derived from the
/// thread pool so summation order (and therefore every float result) is the
/// same no matter how many workers run.
pub const REDUCE_CHUNKS: usize = 16;
