//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(seed, stream)`. ChaCha is counter-based, so a stream is fully determined
//! by its key and stream id, independent of which thread consumes it or of
//! how many other streams were used before it. Resampling loops take one
//! stream per iteration index, which keeps results identical between the
//! parallel and sequential builds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default seed used when the caller does not provide one.
pub const DEFAULT_SEED: u64 = 20_230_612;

/// Stream-id namespaces keep independent consumers of the same seed apart.
pub mod domain {
    pub const BOOTSTRAP: u64 = 1 << 56;
    pub const PERMUTATION: u64 = 2 << 56;
    pub const MEDIAN_GROUPING: u64 = 3 << 56;
    pub const MACE: u64 = 4 << 56;
    pub const SYNTH_TRUTH: u64 = 5 << 56;
    pub const SYNTH_WORKER: u64 = 6 << 56;
    pub const SYNTH_ASSIGN: u64 = 7 << 56;
    pub const KAPPA_BOOTSTRAP: u64 = 8 << 56;
    pub const SYNTH_QUALIFICATION: u64 = 9 << 56;
}

/// Returns the random stream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// 64-bit FNV-1a, used to key per-rater streams by identity rather than by
/// column position.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
