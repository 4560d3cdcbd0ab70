//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool
//! bounded by [`Execution::Parallel::jobs`]. Without it every strategy runs
//! sequentially, so callers never need to `cfg` on the feature themselves.
//! Results always come back in input order.

/// How a batch of independent work items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `jobs == 0` means "use all available cores".
    Parallel {
        jobs: usize,
    },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { jobs: 0 }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn with_jobs(jobs: usize) -> Self {
        if jobs == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { jobs }
        }
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            Execution::Parallel { jobs } => par_map(items, jobs, f),
        }
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let idx: Vec<usize> = (0..n).collect();
        self.map(&idx, |&i| f(i))
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if jobs == 0 {
        return items.par_iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("could not build a {jobs}-thread pool ({e}); running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: &[T], _jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree_and_keep_order() {
        let items: Vec<u64> = (0..500).collect();
        let seq = Execution::Sequential.map(&items, |x| x * x + 1);
        let par = Execution::Parallel { jobs: 0 }.map(&items, |x| x * x + 1);
        let bounded = Execution::Parallel { jobs: 2 }.map(&items, |x| x * x + 1);
        assert_eq!(seq, par);
        assert_eq!(seq, bounded);
        assert_eq!(seq[3], 10);
    }

    #[test]
    fn one_job_is_sequential() {
        assert_eq!(Execution::with_jobs(1), Execution::Sequential);
        assert_eq!(Execution::with_jobs(0), Execution::Parallel { jobs: 0 });
    }
}
