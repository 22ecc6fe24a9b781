//! Singular values by one-sided (Hestenes) Jacobi rotations.
//!
//! Columns of a working copy are orthogonalised pairwise until every pair is
//! numerically orthogonal; the singular values are then the column norms.
//! The method computes small singular values to high relative accuracy, which
//! matters for tolerance-based rank decisions on badly scaled grid tensors.

use super::{Matrix, Scalar};

const MAX_SWEEPS: usize = 80;

/// Singular values in non-increasing order. Length is `min(rows, cols)`.
pub fn singular_values<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    // Work on the orientation with fewer columns.
    let work = if m.cols() > m.rows() {
        m.transpose()
    } else {
        m.clone()
    };
    let (rows, cols) = work.shape();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }

    // Column-major copy so each column is contiguous.
    let mut a: Vec<Vec<T>> = (0..cols).map(|j| work.column(j)).collect();

    // Pre-scale so squared norms neither overflow nor underflow.
    let max_abs = work.max_abs();
    if max_abs == T::zero() {
        return vec![T::zero(); cols];
    }
    let inv = T::one() / max_abs;
    for col in a.iter_mut() {
        for x in col.iter_mut() {
            *x = *x * inv;
        }
    }

    let eps = T::epsilon();
    let two = T::one() + T::one();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let (alpha, beta, gamma) = {
                    let (ci, cj) = (&a[i], &a[j]);
                    let mut alpha = T::zero();
                    let mut beta = T::zero();
                    let mut gamma = T::zero();
                    for (&x, &y) in ci.iter().zip(cj.iter()) {
                        alpha = alpha + x * x;
                        beta = beta + y * y;
                        gamma = gamma + x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (left, right) = a.split_at_mut(j);
                let (ci, cj) = (&mut left[i], &mut right[0]);
                for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
                    let xi = *x;
                    let yj = *y;
                    *x = c * xi - s * yj;
                    *y = s * xi + c * yj;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<T> = a
        .iter()
        .map(|col| col.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt() * max_abs)
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_values_sorted() {
        let m = Matrix::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![0.0, 3.0, 0.0],
            vec![0.0, 0.0, -5.0],
        ])
        .unwrap();
        let sv = singular_values(&m);
        for (got, want) in sv.iter().zip([5.0f64, 3.0, 0.0]) {
            assert!((got - want).abs() < 1e-14, "{sv:?}");
        }
    }

    #[test]
    fn wide_matrix_uses_transpose() {
        // [[3, 0, 4]] has the single singular value 5.
        let m = Matrix::from_rows(&[vec![3.0f64, 0.0, 4.0]]).unwrap();
        let sv = singular_values(&m);
        assert_eq!(sv.len(), 1);
        assert!((sv[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2, 0], [1, 1]]: σ² are the eigenvalues of [[5,1],[1,1]] = 3 ± √5.
        let m = Matrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let sv = singular_values(&m);
        let expect = [(3.0 + 5f64.sqrt()).sqrt(), (3.0 - 5f64.sqrt()).sqrt()];
        for (a, b) in sv.iter().zip(expect) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }
}
