//! Reproducible Gaussian noise streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Identifies one independent random stream.
///
/// The master seed keys a ChaCha generator and the replicate index selects
/// its stream, so distinct indices never share a keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseStream {
    pub master_seed: u64,
    pub replicate_index: u64,
}

/// Replicate indices reserved for draws that are not Monte Carlo replicates
/// of the observation model (limit-law samples, property checks).
pub const RESERVED_EPS_INDEX_BASE: u32 = 0xFFFF_0000;

impl NoiseStream {
    pub fn new(master_seed: u64, replicate_index: u64) -> Self {
        Self {
            master_seed,
            replicate_index,
        }
    }

    /// Counter-based stream for replicate `replicate` at position `eps_index`
    /// in an experiment's noise list. Injective for `replicate < 2^32`.
    pub fn for_replicate(master_seed: u64, eps_index: u32, replicate: u32) -> Self {
        Self::new(master_seed, stream_index(eps_index, replicate))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.replicate_index);
        rng
    }

    /// Fills `out` with independent standard normal draws.
    pub fn fill_standard_normal(&self, out: &mut [f64]) {
        let mut rng = self.rng();
        for v in out.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }
}

pub fn stream_index(eps_index: u32, replicate: u32) -> u64 {
    ((eps_index as u64) << 32) | replicate as u64
}
