//! Seeded random streams.
//!
//! Every random decision draws from a ChaCha stream addressed by
//! `(seed, stream)`, so results never depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for a named unit of work.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// `floor(x)` for a count target, tolerant of `40.0 / 0.8 = 49.999...`.
pub fn floor_count(x: f64) -> usize {
    (x + 1e-9 * x.abs().max(1.0)).floor().max(0.0) as usize
}

/// `round(x)` with halves rounded up.
pub fn round_half_up(x: f64) -> usize {
    floor_count(x + 0.5)
}
