//! Deterministic chunked execution shared by the parallel and sequential
//! paths.
//!
//! Every reduction over a set of windows (batch gradients, metric sums) is
//! split into chunks of a fixed, compile-time size. Each chunk is processed
//! sequentially and the per-chunk results are merged in chunk order. Chunk
//! boundaries and merge order are properties of the algorithm, not of the
//! thread count, so the `parallel` feature (and the number of rayon workers)
//! never changes a single bit of the output — it only changes wall time.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

/// Windows per chunk when accumulating gradients.
pub const GRAD_CHUNK: usize = 32;
/// Windows per chunk when accumulating evaluation metrics.
pub const EVAL_CHUNK: usize = 64;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force the sequential path at runtime even when the `parallel` feature is
/// compiled in. Used by benchmarks and equivalence tests; has no effect on
/// results, only on scheduling.
pub fn set_sequential(force: bool) {
    FORCE_SEQUENTIAL.store(force, Ordering::SeqCst);
}

/// Whether work currently runs on the sequential path.
pub fn is_sequential() -> bool {
    if cfg!(not(feature = "parallel")) {
        return true;
    }
    FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Split `0..n` into half-open ranges of `chunk` items (last may be short).
pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    assert!(chunk > 0, "chunk size must be positive");
    (0..n)
        .step_by(chunk)
        .map(|start| start..usize::min(start + chunk, n))
        .collect()
}

/// Apply `f` to every chunk of `0..n` and return the results in chunk order.
///
/// Runs on the rayon pool when the `parallel` feature is enabled and
/// [`set_sequential`] has not forced the fallback; otherwise runs inline.
/// The output is identical either way.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let ranges = chunk_ranges(n, chunk);
    #[cfg(feature = "parallel")]
    {
        if !is_sequential() {
            use rayon::prelude::*;
            return ranges.into_par_iter().map(f).collect();
        }
    }
    ranges.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_ranges_cover_input_exactly() {
        let ranges = chunk_ranges(10, 4);
        assert_eq!(ranges, vec![0..4, 4..8, 8..10]);
        assert_eq!(chunk_ranges(0, 4), Vec::<Range<usize>>::new());
        assert_eq!(chunk_ranges(4, 4), vec![0..4]);
    }

    #[test]
    fn map_chunks_preserves_chunk_order() {
        let out = map_chunks(100, 7, |r| r.start);
        let expect: Vec<usize> = (0..100).step_by(7).collect();
        assert_eq!(out, expect);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        // Sums of f64 in chunk order must match bit for bit.
        let data: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let sum_chunks = |_: ()| -> Vec<f64> {
            map_chunks(data.len(), EVAL_CHUNK, |r| data[r].iter().sum::<f64>())
        };
        let a = sum_chunks(());
        set_sequential(true);
        let b = sum_chunks(());
        set_sequential(false);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
