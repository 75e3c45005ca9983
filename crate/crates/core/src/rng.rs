//! Seeded substreams and the ordered parallel reduction used by every ensemble.
//!
//! Each Monte Carlo sample `i` draws from its own ChaCha8 stream selected by
//! `(seed, i)`, so a sample's value never depends on which worker produced it.
//! Reductions run over fixed-size chunks and merge the partial results in chunk
//! order, which makes floating-point results identical for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples per parallel work unit. Fixed so merge order does not follow the pool size.
pub const CHUNK_LEN: u64 = 512;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A master seed from which independent per-sample generators are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for sample `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// An unrelated stream family, e.g. one for port forms and one for ensemble draws.
    pub fn child(&self, tag: u64) -> SeedStream {
        SeedStream {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_mul(GOLDEN_GAMMA))),
        }
    }
}

/// Stream-family tags shared by library and CLI.
pub mod tags {
    pub const PORT_FORMS: u64 = 1;
    pub const ENSEMBLE: u64 = 2;
    pub const FRAME: u64 = 3;
    pub const SWEEP: u64 = 4;
}

/// Folds `count` samples in parallel and merges chunk results in index order.
///
/// `step(acc, i)` processes sample `i`; `merge(a, b)` appends `b` to `a`.
pub fn ordered_fold<A, I, S, M>(count: u64, init: I, step: S, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    S: Fn(&mut A, u64) + Sync,
    M: Fn(&mut A, A),
{
    let chunks = count.div_ceil(CHUNK_LEN);
    let partials: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let end = ((c + 1) * CHUNK_LEN).min(count);
            for i in c * CHUNK_LEN..end {
                step(&mut acc, i);
            }
            acc
        })
        .collect();
    let mut total = init();
    for part in partials {
        merge(&mut total, part);
    }
    total
}

/// Maps every index in `0..count` in parallel, preserving order.
pub fn ordered_map<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}
