//! Counter-keyed random streams: each `(root seed, keys...)` tuple maps to
//! an independent ChaCha stream, so results do not depend on the order in
//! which work items are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix_keys(root: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(root), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn keyed_rng(root: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_keys(root, keys))
}

/// FNV-1a, used to turn string ids into stream keys.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Uniform value in `[0, 1)` from integer lattice coordinates.
#[inline]
pub fn lattice_value(seed: u64, octave: u32, ix: i64, iy: i64) -> f64 {
    let h = splitmix64(seed ^ splitmix64((octave as u64) << 32 ^ splitmix64(ix as u64 ^ splitmix64(iy as u64))));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
