//! Seeded random streams.
//!
//! Every stream is a ChaCha12 generator keyed by the 64-bit base seed and
//! placed on a 64-bit stream id derived from `(replication, cell)`. ChaCha
//! streams with distinct ids never overlap, so replications, bootstrap draws
//! and fold partitions are independent by construction and do not depend on
//! the order in which they are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

/// Cell ids reserved by the library. Caller-defined cells should use
/// [`cell_id`] on a descriptive label.
pub mod cells {
    pub const DATA: u64 = 0;
    pub const BOOTSTRAP: u64 = 1;
    pub const PARTITION: u64 = 2;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit id for a textual cell label (FNV-1a, then mixed).
pub fn cell_id(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

/// The generator for `(seed, replication, cell)`.
pub fn stream(seed: u64, replication: u64, cell: u64) -> SimRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64(splitmix64(replication) ^ cell.rotate_left(17)));
    rng
}
