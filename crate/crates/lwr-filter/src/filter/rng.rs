//! Deterministic RNG derivation.
//!
//! Every random draw in a filter run comes from a ChaCha stream keyed by
//! (run seed, frame index, unit index, stream tag). Draws therefore do
//! not depend on evaluation order, which keeps runs bit-identical under
//! any degree of parallelism.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Independent random streams within one run.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    InitialEnsemble = 1,
    Propagate = 2,
    Jitter = 3,
    Resample = 4,
    ObservationNoise = 5,
    Mixture = 6,
}

/// RNG for one (frame, unit) pair on the given stream.
pub fn derive_rng(seed: u64, frame: u64, unit: u64, stream: Stream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&frame.to_le_bytes());
    key[16..24].copy_from_slice(&unit.to_le_bytes());
    key[24..32].copy_from_slice(&(stream as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
