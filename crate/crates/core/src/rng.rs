//! Seeded random sub-streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream whose seed
//! is a hash of the run seed, a fixed purpose label, and up to two integer
//! keys (typically robot ids). Reordering work within a tick therefore never
//! changes what any stream produces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    /// Inter-robot ping noise, keyed by (observer, target).
    Ping,
    /// Random start poses, keyed by nothing.
    StartPoses,
    /// Random choice of which robot fails.
    FailurePick,
}

impl Purpose {
    fn label(self) -> u64 {
        match self {
            Purpose::Ping => 0x7069_6e67,
            Purpose::StartPoses => 0x7374_6172,
            Purpose::FailurePick => 0x6661_696c,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(seed: u64, purpose: Purpose, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ purpose.label());
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(32))
}

pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> SimRng {
    SimRng::seed_from_u64(stream_seed(seed, purpose, a, b))
}
