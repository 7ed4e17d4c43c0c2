//! Optional row-level parallelism, capped by the `OMNIBIND_THREADS`
//! environment variable. `0` (or unset) means sequential execution, which is
//! the determinism reference; parallel runs split work by output row and are
//! bitwise identical to the sequential order.

use std::sync::OnceLock;

use rayon::prelude::*;

static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();

fn pool() -> Option<&'static rayon::ThreadPool> {
    POOL.get_or_init(|| {
        let n: usize = std::env::var("OMNIBIND_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0);
        if n <= 1 {
            None
        } else {
            rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()
        }
    })
    .as_ref()
}

/// Rows below this are not worth shipping to the pool.
const MIN_PARALLEL_CELLS: usize = 4096;

/// Apply `f` to each `width`-sized row of `data`, in parallel when a pool is
/// configured. Each row is written by exactly one closure call, so the result
/// does not depend on scheduling.
pub fn for_each_row(data: &mut [f64], width: usize, f: impl Fn(usize, &mut [f64]) + Sync) {
    match pool() {
        Some(p) if data.len() >= MIN_PARALLEL_CELLS => p.install(|| {
            data.par_chunks_mut(width)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
        }),
        _ => {
            for (i, row) in data.chunks_mut(width).enumerate() {
                f(i, row);
            }
        }
    }
}

/// Ordered parallel map; output order always matches input order.
pub fn map_indexed<T: Sync, U: Send>(
    items: &[T],
    f: impl Fn(usize, &T) -> U + Sync,
) -> Vec<U> {
    match pool() {
        Some(p) if items.len() > 1 => p.install(|| {
            items
                .par_iter()
                .enumerate()
                .map(|(i, item)| f(i, item))
                .collect()
        }),
        _ => items.iter().enumerate().map(|(i, item)| f(i, item)).collect(),
    }
}
