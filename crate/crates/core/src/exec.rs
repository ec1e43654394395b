//! Data-parallel helpers. With the `parallel` feature the parallel strategy
//! runs on the rayon pool; without it every strategy runs sequentially.
//! Results are always collected in index order, so the outcome does not
//! depend on the strategy or the thread count.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Evaluate `f(0), .., f(n-1)` and collect in order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Apply `f` to every element of `items` in place.
pub fn for_each_mut<T, F>(exec: Execution, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter_mut().enumerate().for_each(|(i, v)| f(i, v));
        }
        _ => items.iter_mut().enumerate().for_each(|(i, v)| f(i, v)),
    }
}
