//! Splittable deterministic randomness. Every stream is derived from the
//! master seed with a counter-style mix, so adding agents or rounds never
//! perturbs the streams already in use.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const AGENT_DOMAIN: u64 = 0x61_67_65_6e_74_73; // "agents"
const TOPOLOGY_DOMAIN: u64 = 0x74_6f_70_6f; // "topo"
const REPLICATE_DOMAIN: u64 = 0x72_65_70; // "rep"

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with two lane indices into an independent sub-seed.
pub fn mix(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b)
}

/// Derives per-agent, per-round, and per-purpose RNG streams from one
/// master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSplitter {
    master: u64,
}

impl SeedSplitter {
    pub fn new(master: u64) -> Self {
        SeedSplitter { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream owned by one agent for one round. Covers the initial draft and
    /// every revision phase of that round.
    pub fn agent_rng(&self, round: usize, agent: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.master ^ AGENT_DOMAIN, round as u64, agent as u64))
    }

    /// Stream used to sample the round's communication graph.
    pub fn topology_rng(&self, round: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.master ^ TOPOLOGY_DOMAIN, round as u64, 0))
    }

    /// Derived master seed for replicate `idx` of a multi-seed run.
    pub fn replicate(&self, idx: u64) -> u64 {
        mix(self.master ^ REPLICATE_DOMAIN, idx, 0)
    }
}
