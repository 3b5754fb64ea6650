//! Deterministic random-number substreams.
//!
//! Every random draw in a simulation is tied to one master seed. Independent
//! substreams are derived per (trial, purpose, index) through the ChaCha
//! stream parameter, so results do not depend on worker count or scheduling
//! order, and adding draws to one purpose never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// What a substream is used for. Each purpose gets its own counter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Message-set sampling for a trial.
    Messages,
    /// Channel matrix draw (per chunk).
    Channel,
    /// Receiver noise draw (per chunk).
    Noise,
    /// Alternating-minimization initialization (per chunk; successive SIC
    /// rounds continue drawing from the same stream).
    FactorInit,
    /// Synthetic scene generation in detector/factorization benches.
    Scene,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Messages => 0,
            Purpose::Channel => 1,
            Purpose::Noise => 2,
            Purpose::FactorInit => 3,
            Purpose::Scene => 4,
        }
    }
}

/// Derive the RNG for (master seed, trial, purpose, index).
///
/// `index` distinguishes parallel objects inside one trial (chunk number,
/// scene number); it must be below 2^16 and the trial below 2^40, which the
/// harness sizes respect by orders of magnitude.
pub fn substream(master_seed: u64, trial: u64, purpose: Purpose, index: u32) -> ChaCha12Rng {
    debug_assert!(trial < 1 << 40, "trial index exceeds substream capacity");
    debug_assert!(index < 1 << 16, "substream index exceeds capacity");
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream((trial << 24) | (purpose.code() << 16) | index as u64);
    rng
}
