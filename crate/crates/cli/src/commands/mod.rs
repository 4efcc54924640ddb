//! One function per subcommand. Each writes its resolved config into its
//! output directory before producing results.

mod benchmark;
mod data;
mod growth;
mod maps;

use std::time::Instant;

use rayon::prelude::*;
use rayon::ThreadPool;

pub use benchmark::benchmark;
pub use data::{gen_data, train, train_explainer};
pub use growth::growth;
pub use maps::{attribute, postprocess, severity};

use crate::error::Result;

/// Maps `f` over `items` on `pool`, keeping input order so outputs never
/// depend on scheduling.
pub(crate) fn par_map<T: Sync, U: Send>(
    pool: &ThreadPool,
    items: &[T],
    f: impl Fn(&T) -> Result<U> + Sync + Send,
) -> Result<Vec<U>> {
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Runs `f` and returns its result with the elapsed wall-clock seconds.
pub(crate) fn timed<U>(f: impl FnOnce() -> U) -> (U, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
