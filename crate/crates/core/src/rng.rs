//! Seeded random streams.
//!
//! Every trajectory draws from its own ChaCha stream selected by
//! `(master seed, stream index)`, so ensemble results do not depend on
//! scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent generator for stream `index` under `master_seed`.
pub fn stream(master_seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Stream index for replicate `replicate` of experiment cell `cell`.
pub fn cell_stream(cell: u64, replicate: u64) -> u64 {
    (cell << 32) | (replicate & 0xffff_ffff)
}
