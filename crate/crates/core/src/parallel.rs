//! Deterministic replication-parallel reduction.
//!
//! Replications are grouped into fixed-size chunks. Chunks run on the
//! current rayon pool and their partial results are merged in chunk order,
//! so the output is identical for any number of workers.

use rayon::prelude::*;

pub(crate) const CHUNK: u64 = 256;

pub(crate) fn reduce_replications<A, S, I, F, M>(replications: u64, init_scratch: I, body: F, merge: M) -> A
where
    A: Default + Send,
    S: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &mut A, u64) + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = replications.div_ceil(CHUNK);
    let partials: Vec<A> = (0..chunks)
        .into_par_iter()
        .map_init(&init_scratch, |scratch, c| {
            let mut acc = A::default();
            let end = ((c + 1) * CHUNK).min(replications);
            for r in c * CHUNK..end {
                body(scratch, &mut acc, r);
            }
            acc
        })
        .collect();
    let mut total = A::default();
    for p in partials {
        merge(&mut total, p);
    }
    total
}
