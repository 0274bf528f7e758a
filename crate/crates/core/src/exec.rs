//! Execution-mode switch between sequential and rayon-parallel kernels.
//!
//! The crate compiles with the `parallel` feature by default, in which case
//! hot loops dispatch on a global [`ExecMode`]. Parallel and sequential paths
//! perform the same floating-point operations in the same per-element order,
//! so results are bit-identical across modes; parallelism only splits
//! independent output regions across threads. Without the feature, rayon is
//! not linked and everything runs sequentially.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(1);

/// Set the global execution mode. With the `parallel` feature disabled this
/// is a no-op and the mode is always [`ExecMode::Sequential`].
pub fn set_exec_mode(mode: ExecMode) {
    MODE.store(mode as u8, Ordering::Relaxed);
}

pub fn exec_mode() -> ExecMode {
    if !cfg!(feature = "parallel") {
        return ExecMode::Sequential;
    }
    match MODE.load(Ordering::Relaxed) {
        0 => ExecMode::Sequential,
        _ => ExecMode::Parallel,
    }
}

/// Run `f` on each chunk of `data` (chunks of `size` elements), in parallel
/// when enabled. `f` receives the chunk index and the chunk.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], size: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if exec_mode() == ExecMode::Parallel {
            data.par_chunks_mut(size)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    for (i, c) in data.chunks_mut(size).enumerate() {
        f(i, c);
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if exec_mode() == ExecMode::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}
