use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::{Matrix, Scalar};

/// i.i.d. standard Gaussian entries times `scale`, drawn row by row.
pub fn gaussian_matrix<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    scale: f64,
    rng: &mut R,
) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        T::from_f64(z * scale).unwrap_or_else(T::zero)
    })
}
