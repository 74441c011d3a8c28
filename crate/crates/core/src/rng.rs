//! Named random sub-streams derived from a single master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream names used across the crate.
pub mod streams {
    pub const DATA: &str = "data";
    pub const INIT: &str = "init";
    pub const PERTURBATION: &str = "perturbation";
    pub const ASCENT: &str = "ascent";
    pub const SHUFFLE: &str = "shuffle";
    pub const FISHER: &str = "fisher";
    pub const LABELS: &str = "labels";
    pub const RESCALE: &str = "rescale";
    pub const CONDITIONS: &str = "conditions";
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// ChaCha8 generator for `(master, name)`; distinct names give independent streams.
pub fn stream(master: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Stream indexed by an extra integer, e.g. an epoch or a draw number.
pub fn indexed_stream(master: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(fnv1a(name.as_bytes()) ^ index);
    rng
}
