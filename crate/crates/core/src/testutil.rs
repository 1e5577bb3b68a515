use num_complex::Complex;
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

use crate::scalar::CMatrix;

pub(crate) fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

pub(crate) fn random_cmatrix(n: usize, seed: u64) -> CMatrix<f64> {
    let mut r = rng(seed);
    CMatrix::<f64>::from_fn(n, n, |_, _| {
        Complex::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)
    })
}
