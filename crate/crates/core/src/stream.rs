//! Counter-based random substreams.
//!
//! Every simulated round (or tomography shot) `i` draws from its own ChaCha8
//! stream: the key comes from the user seed, the 64-bit stream id is `i`, and
//! the word position starts at zero. A round's randomness therefore depends
//! only on `(seed, i)`, so any partition of rounds across workers reproduces
//! the single-worker result bit for bit.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Substreams {
    base: ChaCha8Rng,
}

impl Substreams {
    pub fn new(seed: u64) -> Self {
        Substreams { base: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn get(&self, index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng.set_word_pos(0);
        rng
    }
}

/// Splits `0..n` into at most `workers` contiguous shards.
pub fn shards(n: u64, workers: usize) -> Vec<Range<u64>> {
    let workers = workers.max(1) as u64;
    let size = n.div_ceil(workers).max(1);
    (0..n).step_by(size as usize).map(|start| start..(start + size).min(n)).collect()
}
