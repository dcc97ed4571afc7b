//! Deterministic, splittable random number streams.
//!
//! Every stochastic routine takes a [`SeededRng`] by value. A stream is
//! identified by `(master_seed, stream_id)`; materializing the same stream
//! twice yields identical draws, and distinct stream ids are statistically
//! independent. Streams are split by hashing a child id into the stream id,
//! so replication-level work can be scheduled in any order without changing
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededRng {
    pub master_seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            stream_id: 0,
        }
    }

    /// Derive an independent child stream. Children of distinct ids (and of
    /// distinct parents) do not collide in practice.
    pub fn derive(&self, child_id: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(child_id)),
        }
    }

    /// Materialize the stream as a concrete generator.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_stream_same_draws() {
        let a = SeededRng::new(7).derive(3);
        let b = SeededRng::new(7).derive(3);
        let xs: Vec<f64> = a.rng().sample_iter(rand::distributions::Standard).take(16).collect();
        let ys: Vec<f64> = b.rng().sample_iter(rand::distributions::Standard).take(16).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn distinct_streams_differ() {
        let a = SeededRng::new(7).derive(3);
        let b = SeededRng::new(7).derive(4);
        assert_ne!(a.stream_id, b.stream_id);
        let x: f64 = a.rng().gen();
        let y: f64 = b.rng().gen();
        assert_ne!(x, y);
    }

    #[test]
    fn derivation_is_order_free() {
        let root = SeededRng::new(11);
        let a = root.derive(1).derive(2);
        let b = root.derive(1).derive(2);
        assert_eq!(a, b);
        assert_ne!(root.derive(1).derive(2), root.derive(2).derive(1));
    }
}
