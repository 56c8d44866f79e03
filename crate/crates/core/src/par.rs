//! Thin wrappers over the parallel iterators used elsewhere in the crate.
//!
//! Every helper preserves element order and performs reductions over a fixed
//! chunking, so enabling or disabling the `parallel` feature never changes a
//! single output bit, only wall time.

/// Chunk width used by [`sum_vec_over`] when accumulating per-item vectors.
///
/// Summation happens within each chunk sequentially and across chunks in
/// index order, which keeps floating-point results independent of how rayon
/// schedules the chunks.
pub const REDUCE_CHUNK: usize = 32;

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Maps `f` over `items` in parallel, preserving order.
#[cfg(feature = "parallel")]
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Computes `f(i)` for `i in 0..n`, each yielding a vector of length `dim`,
/// and returns their elementwise sum.
///
/// Items are grouped into [`REDUCE_CHUNK`]-sized chunks; each chunk is summed
/// left to right and chunk partials are combined in chunk order, so the
/// result is bitwise identical with and without the `parallel` feature.
pub fn sum_vec_over<F>(n: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let n_chunks = n.div_ceil(REDUCE_CHUNK);
    let partials = map_indexed(n_chunks, |c| {
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(n);
        let mut acc = vec![0.0; dim];
        for i in lo..hi {
            let v = f(i);
            debug_assert_eq!(v.len(), dim);
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += x;
            }
        }
        acc
    });
    let mut total = vec![0.0; dim];
    for p in partials {
        for (a, x) in total.iter_mut().zip(p.iter()) {
            *a += x;
        }
    }
    total
}
