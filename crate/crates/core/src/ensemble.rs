//! Deterministic parallel reduction over trajectory indices.
//!
//! Indices are cut into fixed-size chunks. Each chunk is reduced sequentially
//! into its own accumulator and the chunk results are merged in index order,
//! so the result does not depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Trajectories per chunk.
pub const CHUNK: usize = 32;

pub trait Merge {
    fn merge(&mut self, other: Self);
}

/// Reduces `work(state, acc, index)` over `0..n`. `make_state` builds the
/// per-chunk scratch (propagators, FFT plans) and `make_acc` an empty
/// accumulator.
pub fn reduce<S, A>(
    n: usize,
    make_state: impl Fn() -> Result<S> + Sync,
    make_acc: impl Fn() -> A + Sync,
    work: impl Fn(&mut S, &mut A, usize) -> Result<()> + Sync,
) -> Result<A>
where
    A: Merge + Send,
{
    let n_chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = make_state()?;
            let mut acc = make_acc();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                work(&mut state, &mut acc, i)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = make_acc();
    for p in parts {
        total.merge(p);
    }
    Ok(total)
}

/// Runs `f` on a dedicated pool of `threads` workers; `0` uses the global pool.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}
