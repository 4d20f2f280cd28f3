//! Deterministic parallel replication.
//!
//! Replications are cut into fixed-size blocks. Block `k` gets its own state
//! built from `split_seed(seed, k)` and runs its replications in order, and
//! results are reassembled in block order. Output depends only on `(seed,
//! reps)`, never on the number of worker threads.

use std::ops::Range;

use rayon::prelude::*;

use crate::rng::split_seed;

pub const BLOCK_SIZE: u64 = 1 << 12;

fn block_range(k: u64, reps: u64) -> Range<u64> {
    k * BLOCK_SIZE..((k + 1) * BLOCK_SIZE).min(reps)
}

/// Runs `step` once per replication, returning results in replication order.
pub fn replicate<S, T, I, F>(reps: u64, seed: u64, init: I, step: F) -> Vec<T>
where
    I: Fn(u64) -> S + Sync,
    F: Fn(&mut S, u64) -> T + Sync,
    T: Send,
{
    let blocks = reps.div_ceil(BLOCK_SIZE);
    let chunks: Vec<Vec<T>> = (0..blocks)
        .into_par_iter()
        .map(|k| {
            let mut state = init(split_seed(seed, k));
            block_range(k, reps).map(|r| step(&mut state, r)).collect()
        })
        .collect();
    chunks.into_iter().flatten().collect()
}

/// Like [`replicate`] but reduces within each block into an accumulator,
/// then merges block accumulators left to right.
pub fn replicate_fold<S, A, I, F, Z, M>(reps: u64, seed: u64, init: I, step: F, zero: Z, merge: M) -> A
where
    I: Fn(u64) -> S + Sync,
    F: Fn(&mut S, &mut A, u64) + Sync,
    Z: Fn() -> A + Sync,
    M: Fn(A, A) -> A,
    A: Send,
{
    let blocks = reps.div_ceil(BLOCK_SIZE);
    let partials: Vec<A> = (0..blocks)
        .into_par_iter()
        .map(|k| {
            let mut state = init(split_seed(seed, k));
            let mut acc = zero();
            for r in block_range(k, reps) {
                step(&mut state, &mut acc, r);
            }
            acc
        })
        .collect();
    partials.into_iter().fold(zero(), merge)
}
