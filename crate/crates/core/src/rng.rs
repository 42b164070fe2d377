//! Seed derivation and block-split random streams.
//!
//! Every Monte Carlo stage draws from ChaCha8 streams keyed by
//! `(stage seed, block index)`. Blocks have a fixed size, so the output does
//! not depend on how many threads process them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pulses per independent random stream.
pub const BLOCK_LEN: usize = 4096;

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for a named stage from a master seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    tag.bytes()
        .fold(mix64(seed), |acc, b| mix64(acc ^ u64::from(b)))
}

/// The random stream for block `block` under `seed`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}
