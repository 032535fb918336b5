//! Deterministic, worker-count-independent random streams.
//!
//! A master seed is split into per-block substreams via the ChaCha stream
//! counter: block `b` of sampling domain `d` always reads from stream
//! `(d << 40) | b`, no matter which thread runs it. Replicates are processed
//! in fixed-size blocks and block partials are merged in block order, so
//! every estimate is bit-identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Replicates per substream block. Small enough to parallelize well, large
/// enough that stream setup cost is negligible.
pub const BLOCK_SIZE: u64 = 8192;

/// Identifies an independent sampling context so different estimators
/// never share a substream even under the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    Sampling = 1,
    CrudeMc = 2,
    BigJump = 3,
    Equivalence = 4,
    Ruin = 5,
    Diagnostic = 6,
}

/// The substream for one block.
pub fn block_rng(seed: u64, domain: StreamDomain, block: u64) -> ChaCha12Rng {
    assert!(block < 1 << 40, "block index exceeds stream space");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 40) | block);
    rng
}

/// Runs `body` once per replicate, blocked into deterministic substreams, and
/// merges per-block accumulators in block order.
///
/// `body` receives the block RNG and the accumulator; `merge` must fold the
/// block results associatively. The fold over blocks is sequential and in
/// index order, which is what makes float accumulation reproducible across
/// worker counts.
pub fn block_map_reduce<A, Init, Body, Merge>(
    n_replicates: u64,
    seed: u64,
    domain: StreamDomain,
    init: Init,
    body: Body,
    merge: Merge,
) -> A
where
    A: Send,
    Init: Fn() -> A + Sync,
    Body: Fn(&mut ChaCha12Rng, &mut A) + Sync,
    Merge: Fn(A, A) -> A,
{
    let n_blocks = n_replicates.div_ceil(BLOCK_SIZE);
    let partials: Vec<A> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, domain, b);
            let lo = b * BLOCK_SIZE;
            let hi = (lo + BLOCK_SIZE).min(n_replicates);
            let mut acc = init();
            for _ in lo..hi {
                body(&mut rng, &mut acc);
            }
            acc
        })
        .collect();
    partials.into_iter().fold(init(), merge)
}

/// Mean and standard error accumulated over blocks.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAccumulator {
    pub sum: f64,
    pub sum_sq: f64,
    pub count: u64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.count += 1;
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.count += other.count;
        self
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Standard error of the mean from the sample variance.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let var = (self.sum_sq - self.sum * self.sum / n).max(0.0) / (n - 1.0);
        (var / n).sqrt()
    }
}
