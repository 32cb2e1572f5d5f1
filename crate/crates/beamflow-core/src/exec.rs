//! Execution strategy for per-grid-point work.
//!
//! Grid points are independent, so their contributions can be computed
//! concurrently; determinism is preserved by writing each point's output into
//! a preassigned slice of one buffer and letting the caller reduce over that
//! buffer in index order. The `parallel` feature switches the map step to
//! rayon; the reduction order never changes, so enabling or disabling the
//! feature does not change a single bit of any result.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the rayon dispatch overhead outweighs the work and
/// the map runs inline even with `parallel` enabled.
pub const PAR_MIN_ITEMS: usize = 256;

/// Fill `out` (length `n * width`) by evaluating `f(i, chunk_i)` for each of
/// the `n` equal chunks. Chunks are disjoint, so the buffer contents are
/// independent of the execution order.
pub fn fill_chunks<T, F>(out: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    debug_assert_eq!(out.len() % width.max(1), 0);
    #[cfg(feature = "parallel")]
    {
        if out.len() / width.max(1) >= PAR_MIN_ITEMS {
            out.par_chunks_mut(width)
                .enumerate()
                .for_each(|(i, chunk)| f(i, chunk));
            return;
        }
    }
    fill_chunks_seq(out, width, f);
}

/// Sequential twin of [`fill_chunks`]; always available so benchmarks can
/// compare the two strategies directly.
pub fn fill_chunks_seq<T, F>(out: &mut [T], width: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    for (i, chunk) in out.chunks_mut(width).enumerate() {
        f(i, chunk);
    }
}

/// Ordered map over `0..n`. The result vector is in index order regardless of
/// execution strategy.
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n >= 2 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}
