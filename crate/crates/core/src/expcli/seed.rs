//! Deterministic random-stream derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Estimate = 1,
    Error = 2,
    CalibrationEstimate = 3,
    CalibrationError = 4,
}

const DOMAIN_TAG: u64 = 0x6d62_7468_705f_7273;

/// Independent stream for `(master_seed, trial, purpose)`; a pure function of
/// its arguments.
pub fn stream(master_seed: u64, trial: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&trial.to_le_bytes());
    seed[16..24].copy_from_slice(&(purpose as u64).to_le_bytes());
    seed[24..32].copy_from_slice(&DOMAIN_TAG.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}
