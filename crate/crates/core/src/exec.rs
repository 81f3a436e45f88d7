//! Execution strategy for the data-parallel passes.
//!
//! With the `parallel` feature (on by default) the bulk passes (synthetic
//! generation, normalization, per-bucket sampling, histogramming, sorting)
//! run on the rayon pool. Without it, [`Execution::Parallel`] quietly falls
//! back to the sequential path. Both paths produce identical output; the
//! parallel passes only ever split work along independent seconds or
//! buckets and reassemble in order.

/// Which code path a bulk pass takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// True when this strategy will actually use the thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..n` and collects results in index order.
pub(crate) fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps `f` over a slice and collects results in order.
pub(crate) fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Stable sort by key.
pub(crate) fn stable_sort_by_key<T, K, F>(exec: Execution, items: &mut [T], key: F)
where
    T: Send,
    K: Ord,
    F: Fn(&T) -> K + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        // rayon's par_sort_by_key is a stable merge sort
        items.par_sort_by_key(key);
        return;
    }
    let _ = exec;
    items.sort_by_key(key);
}

/// Counts `(index, weight)` pairs into `len` bins. Returns `None` if an
/// index falls outside the bins.
pub(crate) fn bin_counts<S, F>(
    exec: Execution,
    items: &[S],
    len: usize,
    key: F,
) -> Option<(Vec<u64>, Vec<u64>)>
where
    S: Sync,
    F: Fn(&S) -> (u64, u64) + Send + Sync,
{
    let accumulate = |mut acc: Option<(Vec<u64>, Vec<u64>)>, item: &S| {
        if let Some((counts, weights)) = acc.as_mut() {
            let (idx, w) = key(item);
            if idx < len as u64 {
                counts[idx as usize] += 1;
                weights[idx as usize] += w;
            } else {
                return None;
            }
        }
        acc
    };
    let fresh = || Some((vec![0u64; len], vec![0u64; len]));

    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        // chunk so each worker allocates its private bins once per chunk
        let chunk = (items.len() / (rayon::current_num_threads() * 4)).max(4096);
        return items
            .par_chunks(chunk)
            .map(|c| c.iter().fold(fresh(), accumulate))
            .reduce(fresh, |a, b| match (a, b) {
                (Some((mut ca, mut wa)), Some((cb, wb))) => {
                    ca.iter_mut().zip(cb).for_each(|(x, y)| *x += y);
                    wa.iter_mut().zip(wb).for_each(|(x, y)| *x += y);
                    Some((ca, wa))
                }
                _ => None,
            });
    }
    let _ = exec;
    items.iter().fold(fresh(), accumulate)
}
