//! Counter-based seed derivation for reproducible parallel sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for task `index` under `master`. Streams differ per
/// index, so the result does not depend on how tasks are scheduled.
pub fn task_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Mixes a label into a seed so that different analyses draw from
/// unrelated streams.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, folded with the master seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ master;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
