//! Mapping a function over independent work items, in parallel when the
//! `parallel` feature is enabled (the default) and sequentially otherwise.
//!
//! Solver runs never share state, so batches of (seed, algorithm) cells are
//! embarrassingly parallel; each item's result is bit-identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order. Uses the rayon thread pool when
/// the `parallel` feature is on.
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Sequential map with the same signature as [`map`], kept available in all
/// configurations so the two paths can be benchmarked against each other.
pub fn map_sequential<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<u64> = (0..64).collect();
        let a = map(items.clone(), |x| x.wrapping_mul(2654435761).rotate_left(7));
        let b = map_sequential(items, |x| x.wrapping_mul(2654435761).rotate_left(7));
        assert_eq!(a, b);
    }
}
