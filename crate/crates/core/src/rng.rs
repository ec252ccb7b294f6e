//! Deterministic stream derivation. Every stochastic quantity draws from a
//! ChaCha stream keyed by the master seed and a structural label, so results
//! do not depend on evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels. Each label owns an independent substream space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// GU layout generation.
    Layout,
    /// Episode-level resets (UAV starting positions).
    Reset,
    /// Per-slot traffic arrivals.
    Traffic,
    /// Channel realization for one link in one phase.
    Channel,
    /// Exploration noise for one agent.
    Exploration,
    /// Replay minibatch sampling.
    Sampling,
    /// Network parameter initialization.
    Init,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Layout => 0x1,
            StreamKind::Reset => 0x2,
            StreamKind::Traffic => 0x3,
            StreamKind::Channel => 0x4,
            StreamKind::Exploration => 0x5,
            StreamKind::Sampling => 0x6,
            StreamKind::Init => 0x7,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent RNG from the master seed and a structural key.
/// The four key words typically encode (episode, slot, phase, link id).
pub fn stream(seed: u64, kind: StreamKind, key: [u64; 4]) -> ChaCha8Rng {
    let mut state = splitmix(seed ^ kind.tag().wrapping_mul(0xa076_1d64_78bd_642f));
    for k in key {
        state = splitmix(state ^ splitmix(k));
    }
    let mut bytes = [0u8; 32];
    let mut s = state;
    for chunk in bytes.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
