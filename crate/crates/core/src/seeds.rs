//! Seed derivation.
//!
//! A master seed feeds a ChaCha8 generator; independent sub-streams are
//! selected with `set_stream`, so replica `r` of experiment `tag` always
//! receives the same generator no matter which thread runs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lattice::Site;

/// Generator for sub-stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A derived 64-bit seed for sub-task `index` under label `tag`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.rotate_left(32));
    rng.set_stream(index);
    rng.random()
}

#[inline]
fn zigzag(x: i32) -> u64 {
    ((x << 1) ^ (x >> 31)) as u32 as u64
}

/// Stream key of a lattice site: zigzag-encoded coordinates packed into 21
/// bits each. Unique for |coordinates| < 2^20.
#[inline]
pub fn site_stream(s: Site) -> u64 {
    let mask = (1u64 << 21) - 1;
    (zigzag(s.0[0]) & mask) | ((zigzag(s.0[1]) & mask) << 21) | ((zigzag(s.0[2]) & mask) << 42)
}
