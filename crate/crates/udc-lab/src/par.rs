//! Thin data-parallelism layer. With the `parallel` feature (default), batch
//! work fans out over rayon; without it everything runs sequentially through
//! the same entry points. `Parallelism::Sequential` forces the serial path at
//! runtime so the two can be benchmarked against each other in one binary.

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum Parallelism {
    #[default]
    Auto,
    Sequential,
}

/// Caps the global thread pool from the UDC_LAB_THREADS environment variable.
/// Safe to call more than once; later calls are no-ops.
pub fn init_thread_cap() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(v) = std::env::var("UDC_LAB_THREADS") {
            if let Ok(threads) = v.trim().parse::<usize>() {
                if threads > 0 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
                }
            }
        }
    }
}

/// Maps `f` over `0..len`, preserving index order in the output.
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_with(Parallelism::Auto, len, f)
}

pub fn map_indexed_with<T, F>(mode: Parallelism, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode == Parallelism::Auto {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    let _ = mode;
    (0..len).map(f).collect()
}
