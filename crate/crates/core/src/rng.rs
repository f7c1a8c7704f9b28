//! Seed derivation and complex Gaussian sampling.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by a
//! 64-bit seed. Monte Carlo trials derive their seeds from
//! `(master seed, sweep point, trial index)` so results do not depend on how
//! trials are scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::C64;

/// Sub-stream tags used inside a single trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Matrix = 1,
    Signal = 2,
    Noise = 3,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a path of indices into a child seed.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(parent), |acc, &k| splitmix64(acc ^ splitmix64(k.wrapping_add(0x51))))
}

pub fn stream_seed(trial_seed: u64, stream: Stream) -> u64 {
    derive_seed(trial_seed, &[stream as u64])
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws from CN(0, variance): independent real and imaginary parts with
/// variance `variance / 2` each.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}
