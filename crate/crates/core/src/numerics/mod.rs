//! Dense matrix primitives, tolerance-based numerical rank and exact counting.

mod combinatorics;
mod exact;
mod matrix;
mod svd;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

pub use combinatorics::{
    binomial, c_of_l, ln_big, log_multiset, multiset_coeff, multiset_coeff_big, pow3, BigCount,
};
pub(crate) use combinatorics::ln_multiset_real;
pub use exact::{exact_determinant, exact_rank};
pub use matrix::Matrix;
pub use svd::singular_values;

/// Floating-point scalar used throughout the model and rank code.
pub trait Scalar: Float + FromPrimitive + Debug + Display + Sum + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("undefined input: {0}")]
    Undefined(String),
    #[error("rank tolerance must lie in (0, 1), got {0}")]
    BadTolerance(f64),
}

/// Relative singular-value cutoff used to decide numerical rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTolerance(f64);

impl RankTolerance {
    pub const DEFAULT: RankTolerance = RankTolerance(1e-8);
    /// Looser cutoff for matricized grid tensors, whose entries are
    /// high-degree polynomials and accumulate more rounding.
    pub const GRID: RankTolerance = RankTolerance(1e-7);

    pub fn new(relative_threshold: f64) -> Result<Self, NumericsError> {
        if relative_threshold > 0.0 && relative_threshold < 1.0 {
            Ok(Self(relative_threshold))
        } else {
            Err(NumericsError::BadTolerance(relative_threshold))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Number of singular values above `tol * σ_max`. The all-zero matrix has
/// rank 0.
pub fn numerical_rank<T: Scalar>(m: &Matrix<T>, tol: RankTolerance) -> Result<usize, NumericsError> {
    if m.is_empty() {
        return Err(NumericsError::Undefined("rank of an empty matrix".into()));
    }
    if let Some(pos) = m.as_slice().iter().position(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite {
            row: pos / m.cols(),
            col: pos % m.cols(),
        });
    }
    let sv = singular_values(m);
    let max = sv.first().copied().unwrap_or_else(T::zero);
    if max == T::zero() {
        return Ok(0);
    }
    let cutoff = max * T::from_f64(tol.value()).unwrap_or_else(T::epsilon);
    Ok(sv.iter().filter(|&&s| s > cutoff).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_full_rank() {
        assert_eq!(numerical_rank(&Matrix::<f64>::identity(3), RankTolerance::DEFAULT).unwrap(), 3);
        assert_eq!(
            numerical_rank(&Matrix::<f32>::identity(4), RankTolerance::new(1e-5).unwrap()).unwrap(),
            4
        );
    }

    #[test]
    fn outer_product_rank_one() {
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0, 4.0, 1.5];
        let m = Matrix::from_fn(3, 4, |i, j| u[i] * v[j]);
        assert_eq!(numerical_rank(&m, RankTolerance::DEFAULT).unwrap(), 1);
    }

    #[test]
    fn nearly_singular_under_loose_tolerance() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0000001]]).unwrap();
        assert_eq!(numerical_rank(&m, RankTolerance::new(1e-3).unwrap()).unwrap(), 1);
        assert_eq!(numerical_rank(&m, RankTolerance::new(1e-12).unwrap()).unwrap(), 2);
    }

    #[test]
    fn zero_matrix_rank_zero() {
        assert_eq!(numerical_rank(&Matrix::<f64>::zeros(3, 2), RankTolerance::DEFAULT).unwrap(), 0);
    }

    #[test]
    fn tolerance_bounds() {
        assert!(RankTolerance::new(0.0).is_err());
        assert!(RankTolerance::new(1.0).is_err());
        assert!(RankTolerance::new(1e-3).is_ok());
    }
}
