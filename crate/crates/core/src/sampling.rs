//! Seeded random elements used by property sweeps and fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{op_norm, LevelMatrix, Mat, C};
use crate::ncseries::{MultilinearMap, NCSeries};

pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_c(rng: &mut Rng64) -> C {
    C::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn gaussian(rng: &mut Rng64, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| gaussian_c(rng))
}

/// Random matrix with operator norm one.
pub fn unit_norm(rng: &mut Rng64, d: usize) -> Mat {
    let m = gaussian(rng, d, d);
    let n = op_norm(&m);
    m.map(|z| z / n)
}

pub fn hermitian(rng: &mut Rng64, n: usize) -> Mat {
    let g = gaussian(rng, n, n);
    (&g + g.adjoint()).map(|z| z * 0.5)
}

/// Random point of the upper half-plane at level n with Im(b) ≥ `margin`.
pub fn upper_half_plane(rng: &mut Rng64, d: usize, n: usize, margin: f64) -> LevelMatrix {
    let k = n * d;
    let re = hermitian(rng, k);
    let g = gaussian(rng, k, k).map(|z| z * 0.5);
    let im = &g * g.adjoint() + Mat::identity(k, k).map(|z| z * margin);
    LevelMatrix::new(d, re + im.map(|z| z * C::new(0.0, 1.0)))
}

pub fn random_map(rng: &mut Rng64, d: usize, ell: usize, scale: f64) -> MultilinearMap {
    let dd = d * d;
    MultilinearMap::new(d, ell, gaussian(rng, dd, dd.pow(ell as u32)).map(|z| z * scale))
}

pub fn random_series(rng: &mut Rng64, d: usize, order: usize, scale: f64) -> NCSeries {
    NCSeries::new(d, (0..=order).map(|l| random_map(rng, d, l, scale)).collect())
}
