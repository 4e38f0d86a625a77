//! Data-parallel helpers with a sequential fallback.
//!
//! Every reduction here splits its index range into chunks whose boundaries
//! depend only on the problem size, never on the thread count. Partial
//! results are combined in chunk order, so the sequential and parallel paths
//! produce bit-identical output.

/// Execution strategy for the hot loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

/// Chunk length used by reductions over `len` items.
pub fn chunk_len(len: usize) -> usize {
    const TARGET: usize = 4096;
    TARGET.min(len.max(1))
}

/// Maps `f` over `0..n`, preserving order.
pub fn map<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Exec::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
    }
}

/// Fills `out` by calling `f(index, slot)` for every element.
pub fn fill<T, F>(exec: Exec, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    match exec {
        Exec::Sequential => out.iter_mut().enumerate().for_each(|(i, v)| f(i, v)),
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            out.par_iter_mut().enumerate().for_each(|(i, v)| f(i, v))
        }
    }
}

/// Processes `out` in consecutive rows of length `row`, calling
/// `f(row_index, row_slice)`.
pub fn rows<T, F>(exec: Exec, out: &mut [T], row: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    match exec {
        Exec::Sequential => out.chunks_mut(row).enumerate().for_each(|(i, r)| f(i, r)),
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            out.par_chunks_mut(row).enumerate().for_each(|(i, r)| f(i, r))
        }
    }
}

/// Deterministic sum of `f(i)` over `0..n`.
pub fn sum<F>(exec: Exec, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunk = chunk_len(n);
    let nchunks = n.div_ceil(chunk);
    let partials = map(exec, nchunks, |c| {
        let lo = c * chunk;
        let hi = (lo + chunk).min(n);
        (lo..hi).map(&f).sum::<f64>()
    });
    partials.into_iter().sum()
}

/// Deterministic arg-max over `0..n` of a fallible-free score. Ties resolve
/// to the smallest key returned by `f`, so partitioning never changes the
/// winner.
pub fn max_by_key<K, F>(exec: Exec, n: usize, f: F) -> Option<(f64, K)>
where
    K: Ord + Copy + Send,
    F: Fn(usize) -> Option<(f64, K)> + Sync + Send,
{
    let better = |a: Option<(f64, K)>, b: Option<(f64, K)>| match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => {
            if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                Some(y)
            } else {
                Some(x)
            }
        }
    };
    let chunk = chunk_len(n).min(64);
    let nchunks = n.div_ceil(chunk.max(1));
    let partials = map(exec, nchunks, |c| {
        let lo = c * chunk;
        let hi = (lo + chunk).min(n);
        (lo..hi).map(&f).fold(None, better)
    });
    partials.into_iter().fold(None, better)
}
