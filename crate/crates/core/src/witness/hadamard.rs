use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::{exact_rank, multiset_coeff, numerical_rank, RankTolerance};

use super::{WitnessError, WitnessMatrix};

pub const DEFAULT_MAX_TRIALS: usize = 10_000;

// Largest entry tried by the search.
const MAX_ENTRY: u64 = 12;

fn expected_rows(d: usize, lambda: u32) -> Result<usize, WitnessError> {
    multiset_coeff(d as u64, u64::from(lambda))
        .to_usize()
        .ok_or_else(|| WitnessError::Assumption(format!("(({d} {lambda})) rows do not fit in memory")))
}

fn check_shape(a: &WitnessMatrix, lambda: u32) -> Result<usize, WitnessError> {
    let want = expected_rows(a.n_cols(), lambda)?;
    if a.n_rows() != want {
        return Err(WitnessError::Assumption(format!(
            "A must have (({} {lambda})) = {want} rows, got {}",
            a.n_cols(),
            a.n_rows()
        )));
    }
    Ok(want)
}

/// Whether `(A A^T)^(.lambda)` has full rank `((d lambda))`, numerically.
pub fn verify_hadamard_rank(a: &WitnessMatrix, lambda: u32, tol: RankTolerance) -> Result<bool, WitnessError> {
    let want = check_shape(a, lambda)?;
    let m = a.to_matrix();
    let gram = m.matmul(&m.transpose())?.hadamard_pow(lambda);
    Ok(numerical_rank(&gram, tol)? == want)
}

/// Same test in exact integer arithmetic.
pub fn verify_hadamard_rank_exact(a: &WitnessMatrix, lambda: u32) -> Result<bool, WitnessError> {
    let want = check_shape(a, lambda)?;
    let rows = a.rows();
    let gram: Vec<Vec<BigInt>> = rows
        .iter()
        .map(|x| {
            rows.iter()
                .map(|y| {
                    let dot: u64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
                    BigInt::from(dot).pow(lambda)
                })
                .collect()
        })
        .collect();
    Ok(exact_rank(&gram) == want)
}

/// Randomized search for a `((d lambda)) x d` witness with equal row norms.
///
/// Each trial picks a squared norm with enough integer tuples, then a random
/// subset of those tuples as rows. A candidate is accepted only when both the
/// numerical and the exact rank tests pass. Deterministic in `seed`.
pub fn search_hadamard_witness(
    d: usize,
    lambda: u32,
    seed: u64,
    max_trials: usize,
) -> Result<WitnessMatrix, WitnessError> {
    if d == 0 {
        return Err(WitnessError::Assumption("d must be at least 1".into()));
    }
    if d == 1 {
        return WitnessMatrix::new(vec![vec![1]]);
    }
    if d > 4 {
        return Err(WitnessError::Assumption(format!("search supports d <= 4, got {d}")));
    }
    let rows = expected_rows(d, lambda)?;
    let by_norm = tuples_by_norm(d);
    let norms: Vec<(&u64, &Vec<Vec<u64>>)> = by_norm.iter().filter(|(_, t)| t.len() >= rows).collect();
    if norms.is_empty() {
        return Err(WitnessError::SearchExhausted { trials: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_trials {
        let (_, tuples) = norms[rng.random_range(0..norms.len())];
        let mut pick = sample(&mut rng, tuples.len(), rows).into_vec();
        pick.sort_unstable();
        let a = WitnessMatrix::new(pick.iter().map(|&i| tuples[i].clone()).collect())?;
        if verify_hadamard_rank(&a, lambda, RankTolerance::DEFAULT)? && verify_hadamard_rank_exact(&a, lambda)? {
            return Ok(a);
        }
    }
    Err(WitnessError::SearchExhausted { trials: max_trials })
}

/// All non-zero tuples in `{0..=MAX_ENTRY}^d`, grouped by squared norm in
/// lexicographic order.
fn tuples_by_norm(d: usize) -> BTreeMap<u64, Vec<Vec<u64>>> {
    let mut out: BTreeMap<u64, Vec<Vec<u64>>> = BTreeMap::new();
    let mut t = vec![0u64; d];
    loop {
        let norm: u64 = t.iter().map(|x| x * x).sum();
        if norm > 0 {
            out.entry(norm).or_default().push(t.clone());
        }
        // lexicographic increment
        let mut k = d;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if t[k] < MAX_ENTRY {
                t[k] += 1;
                break;
            }
            t[k] = 0;
        }
    }
}
