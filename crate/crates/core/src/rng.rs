//! Reproducible random substreams.
//!
//! A substream is identified by the base seed and a path of indices
//! (replicate, family, individual). The path is folded through SplitMix64
//! into a 64-bit key that seeds an independent ChaCha8 generator, so a draw
//! depends only on its coordinates and never on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recorded in reports so a run can be replayed.
pub const RNG_DESCRIPTION: &str =
    "ChaCha8 per substream, keyed by SplitMix64 folding of (seed, path...); normals by rand_distr StandardNormal (ziggurat)";

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of the substream at `path` under `seed`.
pub fn substream_seed(seed: u64, path: &[u64]) -> u64 {
    // length first so [a] and [a, 0] differ
    let mut key = splitmix64(seed ^ splitmix64(path.len() as u64));
    for &p in path {
        key = splitmix64(key ^ splitmix64(p.wrapping_add(GOLDEN)));
    }
    key
}

pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(seed, path))
}
