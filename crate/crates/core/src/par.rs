//! Execution helpers shared by every data-parallel loop in the crate.
//!
//! With the `parallel` feature (default) the loops run on the rayon global
//! pool; without it they run sequentially. Either way the *shape* of every
//! reduction depends only on the input length, so results are bit-identical
//! regardless of how many threads are available.

/// Rows per leaf block of a blocked reduction.
pub const BLOCK_ROWS: usize = 256;

/// Maps `f` over `0..len`, preserving index order in the output.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..len`, preserving index order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).map(f).collect()
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indexed(items.len(), |i| f(&items[i]))
}

/// Whether the crate was built with rayon support.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Sums `width`-dimensional contributions over `rows` rows.
///
/// `leaf(start, end, acc)` must add the contribution of rows `start..end`
/// into `acc`. Leaves of [`BLOCK_ROWS`] rows are combined by pairwise
/// (cascade) summation in a tree fixed by `rows` alone.
pub fn blocked_sum<F>(rows: usize, width: usize, leaf: F) -> Vec<f64>
where
    F: Fn(usize, usize, &mut [f64]) + Sync + Send,
{
    let blocks = rows.div_ceil(BLOCK_ROWS).max(1);
    if blocks == 1 {
        let mut acc = vec![0.0; width];
        leaf(0, rows, &mut acc);
        return acc;
    }
    let partials = map_indexed(blocks, |b| {
        let start = b * BLOCK_ROWS;
        let end = (start + BLOCK_ROWS).min(rows);
        let mut acc = vec![0.0; width];
        leaf(start, end, &mut acc);
        acc
    });
    pairwise_combine(partials)
}

/// Pairwise tree combination of equally sized partial sums.
pub fn pairwise_combine(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    assert!(!parts.is_empty(), "pairwise_combine needs at least one part");
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += *y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap()
}

/// Pairwise sum of a scalar sequence.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
