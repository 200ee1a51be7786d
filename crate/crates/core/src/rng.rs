//! Counter-based random streams.
//!
//! Every repetition of a campaign draws from its own ChaCha stream keyed by
//! the master seed and the repetition index, so results do not depend on
//! which worker thread executes which repetition.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The generator used throughout the toolkit.
pub type StreamRng = ChaCha12Rng;

/// Stream domains keep unrelated consumers of the same repetition index apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Experiment = 1,
    Initialization = 2,
    Data = 3,
    Challenge = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(master seed, domain, repetition)`.
pub fn stream(master_seed: u64, domain: Domain, repetition: u64) -> StreamRng {
    let mut seed = [0u8; 32];
    let words = [
        splitmix64(master_seed),
        splitmix64(master_seed ^ 0xD1B5_4A32_D192_ED03),
        splitmix64(domain as u64),
        splitmix64(repetition.rotate_left(17) ^ 0x8CB9_2BA7_2F3D_8DD7),
    ];
    for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = StreamRng::from_seed(seed);
    rng.set_stream(repetition);
    rng
}

/// Stream for a single step inside a repetition.
pub fn step_stream(master_seed: u64, domain: Domain, repetition: u64, step: u64) -> StreamRng {
    let mut rng = stream(master_seed, domain, repetition);
    // 2^40 words per step leaves ample room for any single step's draws.
    rng.set_word_pos((step as u128) << 40);
    rng
}
