//! Seeded random streams. Every trial gets its own ChaCha20 stream seeded
//! with `base_seed + trial_index`, so results do not depend on platform or
//! on the order in which trials finish.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub type TrialRng = ChaCha20Rng;

pub fn trial_rng(base_seed: u64, trial_index: u64) -> TrialRng {
    ChaCha20Rng::seed_from_u64(base_seed.wrapping_add(trial_index))
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, std: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn uniform_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-half_width..=half_width))
}

/// Second stream for a trial, used for algorithmic randomness (model
/// sampling) so that the noise sequence is shared across strategies.
pub fn aux_rng(base_seed: u64, trial_index: u64) -> TrialRng {
    let mut r = trial_rng(base_seed, trial_index);
    r.set_stream(1);
    r
}
