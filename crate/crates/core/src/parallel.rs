//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these run on rayon; without it
//! they run in order on the calling thread. Results are always returned in
//! input order, and no helper performs a cross-item floating-point
//! reduction, so output does not depend on the worker count.

/// Environment variable bounding the worker count.
pub const WORKERS_ENV: &str = "PCP_WORKERS";

/// Worker count requested through [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

/// Elementwise kernels below this length stay on the calling thread.
pub const MIN_PARALLEL_LEN: usize = 1 << 14;

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;

    pub fn map_jobs<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Send + Sync,
    {
        items.into_par_iter().map(f).collect()
    }

    pub fn zip_map(out: &mut [f64], input: &[f64], f: impl Fn(f64) -> f64 + Send + Sync) {
        if out.len() < super::MIN_PARALLEL_LEN {
            out.iter_mut().zip(input).for_each(|(o, &x)| *o = f(x));
        } else {
            out.par_chunks_mut(4096)
                .zip(input.par_chunks(4096))
                .for_each(|(o, i)| {
                    o.iter_mut().zip(i).for_each(|(o, &x)| *o = f(x));
                });
        }
    }

    pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
        match workers {
            Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(f),
                Err(_) => f(),
            },
            None => f(),
        }
    }

    pub fn current_workers() -> usize {
        rayon::current_num_threads()
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn map_jobs<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
    where
        F: Fn(T) -> R,
    {
        items.into_iter().map(f).collect()
    }

    pub fn zip_map(out: &mut [f64], input: &[f64], f: impl Fn(f64) -> f64) {
        out.iter_mut().zip(input).for_each(|(o, &x)| *o = f(x));
    }

    pub fn with_workers<R>(_workers: Option<usize>, f: impl FnOnce() -> R) -> R {
        f()
    }

    pub fn current_workers() -> usize {
        1
    }
}

/// Threads available to the current pool.
pub use imp::current_workers;
/// Applies `f` to every item; results keep input order.
pub use imp::map_jobs;
/// Runs `f` inside a pool of at most `workers` threads.
pub use imp::with_workers;
/// `out[i] = f(input[i])`.
pub use imp::zip_map;
