//! Deterministic random streams.
//!
//! Every trajectory draws from its own ChaCha stream, keyed by the master
//! seed and selected by a mixed counter tuple. Results therefore do not
//! depend on the order (or thread) in which trajectories are sampled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for; keeps training, evaluation and bookkeeping
/// draws disjoint even when their counters coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Snapshot = 1,
    Inner = 2,
    Evaluation = 3,
    Initialization = 4,
    IteratePick = 5,
    Probe = 6,
    Misc = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for trajectory `index` of iteration `iter` of epoch `epoch`.
pub fn stream(master: u64, purpose: Purpose, epoch: u64, iter: u64, index: u64) -> StreamRng {
    let mut id = splitmix(purpose as u64);
    for c in [epoch, iter, index] {
        id = splitmix(id ^ c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(id);
    rng
}
