//! Exact integer linear algebra (fraction-free elimination).

use num_bigint::BigInt;
use num_traits::{One, Zero};

/// Rank of an integer matrix given as rows, computed exactly with
/// Bareiss fraction-free Gaussian elimination.
#[allow(clippy::needless_range_loop)]
pub fn exact_rank(rows: &[Vec<BigInt>]) -> usize {
    let mut m: Vec<Vec<BigInt>> = rows.to_vec();
    let n_rows = m.len();
    let n_cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    let mut prev_pivot = BigInt::one();
    for col in 0..n_cols {
        if rank == n_rows {
            break;
        }
        let Some(pivot_row) = (rank..n_rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot_row);
        let pivot = m[rank][col].clone();
        for r in (rank + 1)..n_rows {
            let factor = m[r][col].clone();
            for c in col..n_cols {
                let v = (&pivot * &m[r][c] - &factor * &m[rank][c]) / &prev_pivot;
                m[r][c] = v;
            }
        }
        prev_pivot = pivot;
        rank += 1;
    }
    rank
}

/// Exact determinant of a square integer matrix.
pub fn exact_determinant(rows: &[Vec<BigInt>]) -> BigInt {
    let n = rows.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut m: Vec<Vec<BigInt>> = rows.to_vec();
    let mut sign = BigInt::one();
    let mut prev_pivot = BigInt::one();
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            match ((k + 1)..n).find(|&r| !m[r][k].is_zero()) {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in (k + 1)..n {
            for j in (k + 1)..n {
                let v = (&m[k][k] * &m[i][j] - &m[i][k] * &m[k][j]) / &prev_pivot;
                m[i][j] = v;
            }
        }
        prev_pivot = m[k][k].clone();
    }
    sign * &m[n - 1][n - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(rows: &[&[i64]]) -> Vec<Vec<BigInt>> {
        rows.iter()
            .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
            .collect()
    }

    #[test]
    fn rank_and_det() {
        let m = big(&[&[1, 2, 3], &[2, 4, 6], &[1, 0, 1]]);
        assert_eq!(exact_rank(&m), 2);
        assert_eq!(exact_determinant(&m), BigInt::zero());
        let id = big(&[&[0, 1], &[1, 0]]);
        assert_eq!(exact_determinant(&id), BigInt::from(-1));
        assert_eq!(exact_rank(&id), 2);
    }

    #[test]
    fn determinant_three_by_three() {
        let m = big(&[&[2, -1, 0], &[1, 3, 4], &[0, 5, 6]]);
        // 2(18-20) + 1(6-0) + 0 = 2
        assert_eq!(exact_determinant(&m), BigInt::from(2));
    }
}
