//! Thin switch between rayon and sequential iteration.
//!
//! Every helper here yields the same result in both modes: work is split
//! into blocks whose boundaries depend only on the input length, and partial
//! results are combined in block order.

use std::ops::Range;

/// Block length used for ordered reductions.
pub const REDUCE_BLOCK: usize = 256;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, parallel when enabled.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Calls `f(row_index, row)` on each `width`-sized chunk of `data`.
pub fn for_each_row<T, F>(data: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// Ordered block reduction over `0..n`: `f` maps each fixed block to a
/// partial, `combine` folds partials left to right.
pub fn reduce_blocks<R, F, C>(n: usize, f: F, combine: C) -> Option<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
    C: Fn(R, R) -> R,
{
    let blocks = n.div_ceil(REDUCE_BLOCK);
    let partials = map_range(blocks, |b| {
        let start = b * REDUCE_BLOCK;
        f(start..(start + REDUCE_BLOCK).min(n))
    });
    partials.into_iter().reduce(combine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_is_block_ordered() {
        let n = 10_000;
        let total = reduce_blocks(n, |r| r.map(|i| i as f64 * 0.1).sum::<f64>(), |a, b| a + b)
            .unwrap();
        let mut expected = 0.0;
        for b in 0..n.div_ceil(REDUCE_BLOCK) {
            let start = b * REDUCE_BLOCK;
            let part: f64 = (start..(start + REDUCE_BLOCK).min(n)).map(|i| i as f64 * 0.1).sum();
            expected += part;
        }
        assert_eq!(total.to_bits(), expected.to_bits());
    }

    #[test]
    fn rows_visit_every_chunk() {
        let mut data = vec![0usize; 12];
        for_each_row(&mut data, 3, |i, row| row.iter_mut().for_each(|x| *x = i));
        assert_eq!(data, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
    }
}
