//! Seeded random streams. One user seed fans out into independent ChaCha
//! streams so that adding draws in one stage never shifts another stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numkit::{CMatrix, RMatrix, C64};

pub type StageRng = ChaCha8Rng;

pub const NORMAL_RANK: u64 = 1;
pub const ZEROS: u64 = 2;
pub const ACCUMULATE: u64 = 3;
pub const TRANSVERSAL: u64 = 4;
pub const SYNTHESIS: u64 = 5;
pub const FRIEND: u64 = 6;
pub const EIGEN: u64 = 7;

/// Fixed seed for stages whose result must not depend on the user seed.
pub const INTERNAL_SEED: u64 = 0x5eed_0f_2e_05;

pub fn stream(seed: u64, stage: u64) -> StageRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

pub fn gaussian(rng: &mut StageRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_matrix(rng: &mut StageRng, rows: usize, cols: usize) -> RMatrix {
    RMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn gaussian_cmatrix(rng: &mut StageRng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| C64::new(gaussian(rng), gaussian(rng)))
}

/// Random `rows x cols` matrix with orthonormal columns (`cols <= rows`).
pub fn orthonormal(rng: &mut StageRng, rows: usize, cols: usize) -> RMatrix {
    let g = gaussian_matrix(rng, rows, cols);
    g.qr().q().columns(0, cols).into_owned()
}

pub fn uniform(rng: &mut StageRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}
