//! Execution strategy for the data-parallel loops.
//!
//! With the `parallel` feature (default) the loops run on a rayon pool sized
//! by [`Workers`]; without it everything runs on the calling thread. Callers
//! only ever see ordered results, so outputs never depend on the schedule.

/// Requested degree of parallelism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workers {
    /// Use rayon's global pool (all cores).
    #[default]
    Auto,
    /// Use exactly this many threads; `1` takes the sequential path.
    Fixed(usize),
}

impl Workers {
    pub fn from_count(count: usize) -> Self {
        Workers::Fixed(count.max(1))
    }

    fn is_sequential(self) -> bool {
        !cfg!(feature = "parallel") || matches!(self, Workers::Fixed(1))
    }
}

/// Runs `op` with the requested worker count in scope for [`map_ordered`].
pub fn install<R: Send>(workers: Workers, op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Workers::Fixed(n) = workers {
        if n > 1 {
            match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => return pool.install(op),
                Err(_) => return op(),
            }
        }
    }
    let _ = workers;
    op()
}

/// Maps `f` over `items`, returning results in input order.
pub fn map_ordered<T, R, F>(workers: Workers, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if workers.is_sequential() {
        return items.iter().map(f).collect();
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over `0..len`, returning results in index order.
pub fn map_range<R, F>(workers: Workers, len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    if workers.is_sequential() {
        return (0..len).map(f).collect();
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_results_match_sequential() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map_ordered(Workers::Fixed(1), &items, |x| x * x);
        let par = install(Workers::Fixed(4), || map_ordered(Workers::Fixed(4), &items, |x| x * x));
        assert_eq!(seq, par);
        assert_eq!(map_range(Workers::Auto, 5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }
}
