//! Scoped rayon pools with an explicit worker count.

use rayon::{ThreadPoolBuildError, ThreadPoolBuilder};

/// Runs `op` inside a dedicated pool of `jobs` workers (`0` means rayon's
/// default). Work is collected in index order, so results never depend on
/// the worker count.
pub fn install<R, F>(jobs: usize, op: F) -> Result<R, ThreadPoolBuildError>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let pool = ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(op))
}
