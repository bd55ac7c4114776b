//! Seeded random streams.
//!
//! Every random quantity in the crate comes from a ChaCha8 stream keyed by
//! `(seed, domain)`. The ChaCha stream id and word position select a
//! sub-stream, so a draw indexed by `(s, j)` does not depend on evaluation
//! order or on how work is split across threads. ChaCha8 output does not
//! depend on the platform, so results match across machines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent consumers of randomness. Each gets its own key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    DatasetNoise = 1,
    Split = 2,
    Hmc = 3,
    LatentConditional = 4,
    LinkSample = 5,
}

/// Words reserved per sub-stream offset; far more than any single
/// rejection sampler consumes.
const WORDS_PER_OFFSET: u128 = 1 << 32;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key(seed: u64, domain: Domain) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut state = seed ^ ((domain as u64) << 56);
    for chunk in out.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    out
}

/// Base generator for a domain.
pub fn base(seed: u64, domain: Domain) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(key(seed, domain))
}

/// Sub-stream `(stream, offset)` of a domain generator.
pub fn substream(seed: u64, domain: Domain, stream: u64, offset: u64) -> ChaCha8Rng {
    let mut rng = base(seed, domain);
    rng.set_stream(stream);
    rng.set_word_pos(offset as u128 * WORDS_PER_OFFSET);
    rng
}

/// Re-positions a cloned generator instead of re-deriving the key.
pub fn reposition(template: &ChaCha8Rng, stream: u64, offset: u64) -> ChaCha8Rng {
    let mut rng = template.clone();
    rng.set_stream(stream);
    rng.set_word_pos(offset as u128 * WORDS_PER_OFFSET);
    rng
}
