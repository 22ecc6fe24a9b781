//! Exact and log-space counting: multiset coefficients and `C(L)`.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use statrs::function::gamma::ln_gamma;

use super::NumericsError;

/// Arbitrary-precision non-negative count.
pub type BigCount = BigUint;

/// Binomial coefficient `C(n, k)` by the exact running product
/// `prod_{i=1..k} (n-k+i)/i`, each partial quotient being an integer.
pub fn binomial(n: u64, k: u64) -> BigCount {
    if k > n {
        return BigCount::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigCount::one();
    for i in 1..=k {
        acc *= n - k + i;
        acc /= i;
    }
    acc
}

/// Multiset coefficient `((n k)) = C(n+k-1, k)`: the number of size-`k`
/// multisets over `n` symbols, equivalently the number of non-negative
/// integer `n`-tuples summing to `k`.
pub fn multiset_coeff(n: u64, k: u64) -> BigCount {
    multiset_coeff_big(n, &BigCount::from(k))
}

/// Multiset coefficient with a possibly huge `k` (e.g. `3^L`), evaluated as
/// `C(n-1+k, n-1)` so the loop runs over the small argument.
pub fn multiset_coeff_big(n: u64, k: &BigCount) -> BigCount {
    if k.is_zero() {
        return BigCount::one();
    }
    if n == 0 {
        return BigCount::zero();
    }
    if let Some(k_small) = k.to_u64() {
        if k_small < n - 1 {
            return binomial(n - 1 + k_small, k_small);
        }
    }
    let mut acc = BigCount::one();
    for i in 1..=(n - 1) {
        acc *= k + BigCount::from(i);
        acc /= i;
    }
    acc
}

/// Natural log of `((n k))`.
pub fn log_multiset(n: u64, k: u64) -> Result<f64, NumericsError> {
    if n == 0 && k > 0 {
        return Err(NumericsError::Undefined(format!(
            "log of multiset coefficient (({n} {k})) = 0"
        )));
    }
    Ok(ln_multiset_real(n as f64, k as f64))
}

/// Log-space multiset coefficient for real-valued (integer-valued) arguments
/// that may exceed `u64`, such as `k = 3^L` for deep networks.
///
/// Sums `ln((k+i)/i)` over the smaller of `k` and `n-1`, which avoids the
/// cancellation of a log-gamma difference when one argument is tiny. Falls
/// back to log-gamma when both arguments are large.
pub(crate) fn ln_multiset_real(n: f64, k: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    if n <= 1.0 {
        return if n == 1.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    // ln C(a + b, b) with a = k, b = n-1 (symmetric).
    let (big, small) = if k >= n - 1.0 { (k, n - 1.0) } else { (n - 1.0, k) };
    const DIRECT_LIMIT: f64 = 1.0e6;
    if small <= DIRECT_LIMIT {
        let terms = small as u64;
        let mut acc = 0.0;
        for i in 1..=terms {
            let i = i as f64;
            acc += (big / i).ln_1p();
        }
        acc
    } else {
        ln_gamma(big + small + 1.0) - ln_gamma(big + 1.0) - ln_gamma(small + 1.0)
    }
}

/// `3^L` exactly.
pub fn pow3(l: u32) -> BigCount {
    BigCount::from(3u32).pow(l)
}

/// `C(L) = (3^L - 1) / 2`, the number of free position indices in the
/// explicit polynomial form of a depth-`L` composition.
pub fn c_of_l(l: u32) -> BigCount {
    (pow3(l) - BigCount::one()) / BigCount::from(2u32)
}

/// Natural log of a big integer, accurate to f64 precision at any size.
pub fn ln_big(x: &BigCount) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 64 {
        return x.to_u64().map_or(f64::NAN, |v| (v as f64).ln());
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().unwrap_or(u64::MAX);
    (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(multiset_coeff(3, 0), BigCount::from(1u32));
        assert_eq!(multiset_coeff(2, 3), BigCount::from(4u32));
        assert_eq!(multiset_coeff(3, 2), BigCount::from(6u32));
        assert_eq!(multiset_coeff(0, 4), BigCount::zero());
        assert_eq!(multiset_coeff(0, 0), BigCount::one());
    }

    #[test]
    fn log_examples() {
        assert!((log_multiset(2, 3).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(log_multiset(7, 0).unwrap(), 0.0);
        assert_eq!(log_multiset(1, 40).unwrap(), 0.0);
        assert!(log_multiset(0, 1).is_err());
    }

    #[test]
    fn c_of_l_values() {
        assert_eq!(c_of_l(0), BigCount::zero());
        assert_eq!(c_of_l(1), BigCount::from(1u32));
        assert_eq!(c_of_l(2), BigCount::from(4u32));
        assert_eq!(c_of_l(3), BigCount::from(13u32));
    }

    #[test]
    fn big_k_matches_small_path() {
        for n in 1..8u64 {
            for k in 0..12u64 {
                assert_eq!(
                    multiset_coeff_big(n, &BigCount::from(k)),
                    binomial(n + k - 1, k),
                    "n={n} k={k}"
                );
            }
        }
    }

    #[test]
    fn ln_big_large_values() {
        let x = pow3(200);
        assert!((ln_big(&x) - 200.0 * 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn log_gamma_branch_agrees_with_direct_sum() {
        // Both arguments above the direct-sum limit.
        let n = 2.0e6;
        let k = 3.0e6;
        let lg = ln_multiset_real(n, k);
        let direct: f64 = (1..=(n as u64 - 1)).map(|i| (k / i as f64).ln_1p()).sum();
        assert!(((lg - direct) / direct).abs() < 1e-9);
    }
}
