//! Seeded random sources.
//!
//! Everything random in the toolkit flows from a ChaCha8 stream. Parallel
//! workers derive their own source from `(seed, stream)` instead of sharing one.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{orthonormalize_columns, Field, Mat};
use crate::{Error, Result};

pub type RandomSource = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> RandomSource {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent source for worker/trial `stream` under a common `seed`.
pub fn substream(seed: u64, stream: u64) -> RandomSource {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Matrix of i.i.d. standard Gaussian entries, filled column by column.
pub fn gaussian_matrix<T: Field, R: rand::Rng + ?Sized>(n1: usize, n2: usize, rng: &mut R) -> Mat<T> {
    DMatrix::from_fn(n1, n2, |_, _| T::sample_standard(rng))
}

/// Haar-distributed `n x r` factor with orthonormal columns.
pub fn orthonormal_factor<T: Field, R: rand::Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> Result<Mat<T>> {
    if r == 0 || r > n {
        return Err(Error::RankOutOfRange { rank: r, max: n });
    }
    let g: Mat<T> = gaussian_matrix(n, r, rng);
    orthonormalize_columns(&g)
}
