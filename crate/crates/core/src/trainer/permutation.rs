//! Paired sign-flip permutation test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_ROUNDS: usize = 1000;
/// Up to this many pairs every sign pattern is enumerated.
pub const EXHAUSTIVE_MAX_N: usize = 12;

/// Two-sided p-value for `mean(a - b) = 0`.
///
/// Each pair's difference keeps or flips its sign; the statistic is
/// `|Σ d|`. Small inputs (N ≤ 12, or `2^N ≤ rounds`) are enumerated
/// exactly and give `count / 2^N`. Larger inputs draw `rounds` seeded
/// patterns and give `(1 + count) / (1 + rounds)`.
pub fn permutation_test(a: &[f64], b: &[f64], rounds: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::invalid(format!(
            "permutation test needs two nonempty vectors of equal length, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("permutation test inputs must be finite"));
    }
    let observed = d.iter().sum::<f64>().abs();
    if observed == 0.0 {
        return Ok(1.0);
    }
    // sums of the same terms in another order may differ by rounding
    let slack = 1e-12 * d.iter().map(|v| v.abs()).sum::<f64>();
    let extreme = |signs: &mut dyn FnMut(usize) -> bool| {
        let s: f64 = d.iter().enumerate().map(|(i, &v)| if signs(i) { -v } else { v }).sum();
        s.abs() >= observed - slack
    };
    let n = d.len();
    let exhaustive = n <= EXHAUSTIVE_MAX_N || (n < 63 && (1u64 << n) <= rounds as u64);
    if exhaustive {
        let total = 1u64 << n;
        let count = (0..total).filter(|mask| extreme(&mut |i| mask >> i & 1 == 1)).count();
        return Ok(count as f64 / total as f64);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0usize;
    for _ in 0..rounds {
        if extreme(&mut |_| rng.random_bool(0.5)) {
            count += 1;
        }
    }
    Ok((1 + count) as f64 / (1 + rounds) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors() {
        let a = [0.1, 0.5, 0.9];
        assert_eq!(permutation_test(&a, &a, DEFAULT_ROUNDS, 0).unwrap(), 1.0);
        let big: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(permutation_test(&big, &big, DEFAULT_ROUNDS, 0).unwrap(), 1.0);
    }

    #[test]
    fn separated_vectors() {
        let p = permutation_test(&[1.0; 10], &[0.0; 10], DEFAULT_ROUNDS, 0).unwrap();
        assert_eq!(p, 2.0 / 1024.0);
        assert!(p <= 3.0 / 1000.0);
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let a: Vec<f64> = (0..40).map(|i| (i % 7) as f64 / 7.0).collect();
        let b: Vec<f64> = (0..40).map(|i| (i % 5) as f64 / 5.0).collect();
        let p1 = permutation_test(&a, &b, 500, 3).unwrap();
        assert_eq!(p1, permutation_test(&a, &b, 500, 3).unwrap());
        assert!(p1 > 0.0 && p1 <= 1.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(permutation_test(&[], &[], 10, 0).is_err());
        assert!(permutation_test(&[1.0], &[1.0, 2.0], 10, 0).is_err());
    }
}
