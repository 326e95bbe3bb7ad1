//! Deterministic chunked execution.
//!
//! Work is split into fixed-size index chunks; each chunk is mapped
//! independently and the per-chunk results are combined in chunk order.
//! The chunk boundaries and the reduction order never depend on the worker
//! count, so output is bit-identical for 1 and N workers. The `parallel`
//! feature routes the map over a rayon pool; without it the chunks run on
//! the calling thread through the identical code path.

use std::ops::Range;

/// Split `0..total` into contiguous chunks of at most `chunk` items.
pub fn chunk_ranges(total: u64, chunk: u64) -> Vec<Range<u64>> {
    assert!(chunk > 0, "chunk size must be positive");
    let mut out = Vec::with_capacity(total.div_ceil(chunk) as usize);
    let mut start = 0;
    while start < total {
        let end = (start + chunk).min(total);
        out.push(start..end);
        start = end;
    }
    out
}

/// Map every chunk of `0..total` through `f`, returning results in chunk
/// order. `threads` selects the worker count; any value below 2 (or a build
/// without the `parallel` feature) maps sequentially.
pub fn map_chunks<T, F>(total: u64, chunk: u64, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync,
{
    let ranges = chunk_ranges(total, chunk);

    #[cfg(feature = "parallel")]
    if threads > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("building a rayon pool cannot fail with default stack settings");
        // `collect` keeps chunk order, so the later fold is a fixed tree.
        return pool.install(|| ranges.into_par_iter().map(f).collect());
    }

    let _ = threads;
    ranges.into_iter().map(f).collect()
}
