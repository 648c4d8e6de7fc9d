//! Deterministic, splittable random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! base seed and positioned on an explicit stream, so Monte Carlo trials can
//! run in any order (or concurrently) and still reproduce bit for bit.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// What a stream is used for inside one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Snapshots = 0,
    PowerInit = 1,
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream for `purpose` within Monte Carlo trial `trial`.
pub fn trial_rng(base_seed: u64, trial: u64, purpose: Purpose) -> ChaCha8Rng {
    stream_rng(base_seed, (trial << 4) | purpose as u64)
}

/// Seed for the per-trial power-method start vectors, taken from the trial's
/// own stream so it is independent of every other trial.
pub fn trial_seed(base_seed: u64, trial: u64) -> u64 {
    trial_rng(base_seed, trial, Purpose::PowerInit).random()
}

/// Circular complex normal with unit variance: E|z|^2 = 1.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<Complex64> {
    DVector::from_fn(len, |_, _| complex_normal(rng))
}
