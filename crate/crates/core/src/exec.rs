//! Batch execution: the independent-evaluation loops (calibration candidates,
//! CEM populations, randomization batches) go through [`Parallelism::map`].
//!
//! With the `parallel` feature the `Parallel` mode fans out over rayon; without
//! it every mode runs on the calling thread. Results always come back in index
//! order, so reductions over them are identical across modes.

/// How a batch of independent evaluations is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    /// Use the ambient rayon pool (or a dedicated one when `workers` is set).
    #[default]
    Parallel,
    /// Dedicated pool with this many threads.
    Workers(usize),
}

impl Parallelism {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(0) | None => Parallelism::Parallel,
            Some(1) => Parallelism::Sequential,
            Some(n) => Parallelism::Workers(n),
        }
    }

    /// `f(0..n)` collected in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Parallelism::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Parallelism::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(feature = "parallel")]
            Parallelism::Workers(threads) => {
                use rayon::prelude::*;
                match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                    Ok(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
                    Err(_) => (0..n).map(f).collect(),
                }
            }
            #[cfg(not(feature = "parallel"))]
            Parallelism::Parallel | Parallelism::Workers(_) => (0..n).map(f).collect(),
        }
    }
}

/// Number of worker threads `Parallel` would use.
pub fn available_workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let f = |i: usize| (i as f64).sqrt() * 3.0;
        let seq = Parallelism::Sequential.map(257, f);
        let par = Parallelism::Parallel.map(257, f);
        let two = Parallelism::Workers(2).map(257, f);
        assert_eq!(seq, par);
        assert_eq!(seq, two);
        assert_eq!(seq[16], 12.0);
    }

    #[test]
    fn worker_flag_mapping() {
        assert_eq!(Parallelism::from_workers(None), Parallelism::Parallel);
        assert_eq!(Parallelism::from_workers(Some(1)), Parallelism::Sequential);
        assert_eq!(Parallelism::from_workers(Some(4)), Parallelism::Workers(4));
    }
}
