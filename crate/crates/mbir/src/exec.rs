//! Data-parallel helpers with a sequential fallback.
//!
//! Batch loops over documents (scoring, matching, candidate checks) go
//! through [`map`] / [`any`]. With the `parallel` feature enabled they run on
//! the current rayon thread pool; without it they are plain iterator loops.
//! Both paths compute per-item results independently, so output is identical
//! regardless of thread count. [`map_seq`] / [`any_seq`] are always
//! sequential; the bench suite uses them as the comparison baseline.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential reference version of [`map`].
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// True if `pred` holds for any item.
pub fn any<T, F>(items: &[T], pred: F) -> bool
where
    T: Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().any(pred)
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().any(pred)
    }
}

/// Sequential reference version of [`any`].
pub fn any_seq<T, F>(items: &[T], pred: F) -> bool
where
    F: Fn(&T) -> bool,
{
    items.iter().any(pred)
}
