//! Thin wrappers that run in parallel with the `parallel` feature and
//! sequentially without it. Results never depend on scheduling.

use crate::market_models::Diagnostics;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f(row_index, row)` to every `cols`-wide row of `data` and sums the
/// returned diagnostics.
pub(crate) fn map_rows<F>(data: &mut [f64], cols: usize, f: F) -> Diagnostics
where
    F: Fn(usize, &mut [f64]) -> Diagnostics + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let parts: Vec<Diagnostics> = data
        .par_chunks_mut(cols)
        .enumerate()
        .map(|(j, r)| f(j, r))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Diagnostics> = data
        .chunks_mut(cols)
        .enumerate()
        .map(|(j, r)| f(j, r))
        .collect();
    sum(&parts)
}

/// Maps `f` over `0..n`, preserving index order.
pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

/// Applies `f` to every element of `items` in place and sums diagnostics.
pub(crate) fn for_each_mut<T, F>(items: &mut [T], f: F) -> Diagnostics
where
    T: Send,
    F: Fn(&mut T) -> Diagnostics + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let parts: Vec<Diagnostics> = items.par_iter_mut().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Diagnostics> = items.iter_mut().map(f).collect();
    sum(&parts)
}

fn sum(parts: &[Diagnostics]) -> Diagnostics {
    let mut total = Diagnostics::default();
    parts.iter().for_each(|d| total.merge(d));
    total
}
