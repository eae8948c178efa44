//! Execution strategy shared by the data-parallel kernels.
//!
//! Every kernel takes a [`Strategy`]. `Parallel` uses rayon when the
//! `parallel` feature is enabled and silently runs sequentially otherwise, so
//! results never depend on the build configuration.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Sequential,
    #[default]
    Parallel,
}

impl Strategy {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Strategy::Parallel
    }
}

/// Split `0..len` into contiguous chunks of roughly equal size.
pub fn chunks(len: usize, pieces: usize) -> Vec<std::ops::Range<usize>> {
    let pieces = pieces.max(1).min(len.max(1));
    let base = len / pieces;
    let extra = len % pieces;
    let mut out = Vec::with_capacity(pieces);
    let mut start = 0;
    for i in 0..pieces {
        let size = base + usize::from(i < extra);
        out.push(start..start + size);
        start += size;
    }
    out
}

fn worker_count() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Map `f` over chunks of `0..len` and return the per-chunk results in order.
pub fn map_chunks<T, F>(strategy: Strategy, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    if !strategy.is_parallel() || len < 2 {
        return vec![f(0..len)];
    }
    let ranges = chunks(len, worker_count() * 4);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        ranges.into_par_iter().map(|r| f(r)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(|r| f(r)).collect()
    }
}

/// Map `f` over a slice of inputs, preserving order.
pub fn map_items<I, T, F>(strategy: Strategy, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    if !strategy.is_parallel() {
        return items.iter().map(&f).collect();
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(&f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(&f).collect()
    }
}

/// Cap the global worker pool. Returns false if the pool was already built.
pub fn init_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range() {
        for len in [0usize, 1, 7, 100] {
            for pieces in [1usize, 3, 8, 200] {
                let c = chunks(len, pieces);
                let total: usize = c.iter().map(|r| r.len()).sum();
                assert_eq!(total, len);
                for w in c.windows(2) {
                    assert_eq!(w[0].end, w[1].start);
                }
            }
        }
    }

    #[test]
    fn strategies_agree() {
        let f = |r: std::ops::Range<usize>| r.map(|i| i * i).sum::<usize>();
        let a: usize = map_chunks(Strategy::Sequential, 1000, f).into_iter().sum();
        let b: usize = map_chunks(Strategy::Parallel, 1000, f).into_iter().sum();
        assert_eq!(a, b);
    }
}
