//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! the rayon pool; without it (or with [`Exec::Sequential`]) it runs in order
//! on the calling thread. Results are always returned in index order.

/// Execution strategy for the data-parallel loops in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Like [`map_indexed`] for fallible work; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(exec: Exec, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Send + Sync,
{
    map_indexed(exec, n, f).into_iter().collect()
}

pub fn map_slice<A, T, F>(exec: Exec, items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Send + Sync,
{
    map_indexed(exec, items.len(), |i| f(&items[i]))
}

/// Consume `items`, mapping each one, possibly in parallel; order is kept.
pub fn map_owned<A, T, F>(exec: Exec, items: Vec<A>, f: F) -> Vec<T>
where
    A: Send,
    T: Send,
    F: Fn(A) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    let _ = exec;
    items.into_iter().map(f).collect()
}

/// Number of worker threads the parallel path would use.
pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();
    #[cfg(not(feature = "parallel"))]
    return 1;
}

/// Cap the global pool. Has no effect without the `parallel` feature or
/// after the pool has been initialized.
pub fn init_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
