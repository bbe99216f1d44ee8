//! Chunked map over slices: rayon with the `parallel` feature, a plain
//! loop otherwise.
//!
//! Results always come back in chunk order, so reductions over them are
//! bit-identical whichever backend produced them. The sequential path can
//! also be forced at runtime on the calling thread with [`with_backend`],
//! which is how the benches compare the two.

use std::cell::Cell;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Samples per work unit for batch evaluation.
pub const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Sequential,
    Parallel,
}

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Backend used by calls made from this thread.
pub fn current_backend() -> Backend {
    if cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(Cell::get) {
        Backend::Parallel
    } else {
        Backend::Sequential
    }
}

/// Run `f` with the given backend on this thread. Asking for
/// [`Backend::Parallel`] without the `parallel` feature is a no-op.
pub fn with_backend<R>(backend: Backend, f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(backend == Backend::Sequential));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    match current_backend() {
        #[cfg(feature = "parallel")]
        Backend::Parallel => items.par_chunks(chunk).map(f).collect(),
        _ => items.chunks(chunk).map(f).collect(),
    }
}

/// Order-preserving map over `0..n`.
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match current_backend() {
        #[cfg(feature = "parallel")]
        Backend::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}
