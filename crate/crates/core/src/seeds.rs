//! Named sub-seeds derived from one top-level seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SPLIT: &str = "split";
pub const SYNTH: &str = "synth";
pub const INIT: &str = "init";

/// A deterministic stream of seeds for one purpose.
///
/// Different names give independent ChaCha streams from the same key.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(name_id(name));
    rng
}

/// The `index`-th seed of the named stream.
pub fn sub_seed(seed: u64, name: &str, index: u64) -> u64 {
    let mut rng = stream(seed, name);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

fn name_id(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}
