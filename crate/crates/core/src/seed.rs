//! Seed derivation for reproducible, scheduling-independent randomness.
//!
//! Every random stream in the toolkit is keyed by `(master seed, domain, index)`
//! rather than by the order in which work happens to run, so parallel and
//! serial executions draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream domains. Distinct domains never share a derived seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Shadowing = 1,
    Trajectory = 2,
    Split = 3,
    Realization = 4,
    Init = 5,
    Shuffle = 6,
    Dropout = 7,
    Cell = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a domain tag and an index path.
pub fn derive(master: u64, domain: Domain, path: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ (domain as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    for &p in path {
        h = splitmix64(h ^ p);
    }
    h
}

pub fn rng(master: u64, domain: Domain, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(master, domain, path))
}
