//! Counter-based random streams.
//!
//! Every random object in an experiment is drawn from its own ChaCha stream,
//! keyed by `(seed, purpose, index)`. Draws for the noise matrix never share
//! state with draws for the signal vectors, and trial `k` never depends on how
//! many trials ran before it, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant becomes part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Noise = 1,
    LeftSignal = 2,
    RightSignal = 3,
    ProbeVector = 4,
    Auxiliary = 5,
}

/// Returns the random stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // 64-bit stream id: 8 bits of purpose, 56 bits of index.
    let id = ((purpose as u64) << 56) | (index & ((1u64 << 56) - 1));
    rng.set_stream(id);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, Purpose::Noise, 3), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, Purpose::Noise, 3), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        let mut other = stream(7, Purpose::LeftSignal, 3);
        let c: u64 = other.random();
        assert_ne!(a[0], c);
        let mut next = stream(7, Purpose::Noise, 4);
        let d: u64 = next.random();
        assert_ne!(a[0], d);
    }
}
