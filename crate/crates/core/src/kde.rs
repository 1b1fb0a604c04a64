//! Gaussian kernel density estimation on the confidence axis.
//!
//! All masses are Gaussian-CDF differences. The lower limit of integration
//! is 0; mass that spills beyond 1 is not folded back, so
//! `cdf_from_zero(1) < 1` for interior centers.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Lower clamp for any bandwidth produced by [`scott_bandwidth`].
pub const MIN_BANDWIDTH: f64 = 1e-3;

const INVERT_TOL: f64 = 1e-12;
const INVERT_MAX_ITER: usize = 200;

/// Standard normal CDF via `erfc`, accurate to about one ulp in the tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Scott's rule `h = sd * n^(-1/5)` with the sample standard deviation
/// (denominator `n - 1`), clamped to `[MIN_BANDWIDTH, 1]`.
pub fn scott_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return MIN_BANDWIDTH;
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let h = var.sqrt() * nf.powf(-0.2);
    if h.is_nan() {
        return MIN_BANDWIDTH;
    }
    h.clamp(MIN_BANDWIDTH, 1.0)
}

/// KDE over confidences with optional per-center weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernelModel {
    centers: Vec<f64>,
    bandwidth: f64,
    weights: Option<Vec<f64>>,
}

impl GaussianKernelModel {
    pub fn new(centers: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::invalid("kernel model needs at least one center"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if let Some(i) = centers.iter().position(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid(format!("center {i} = {} outside [0, 1]", centers[i])));
        }
        Ok(Self {
            centers,
            bandwidth,
            weights: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.centers.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} centers",
                weights.len(),
                self.centers.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid(format!("weight {i} = {} outside [0, 1]", weights[i])));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    /// No range checks; used by the finite-difference oracle, whose
    /// perturbed inputs may step slightly outside the model invariants.
    pub(crate) fn from_parts_unchecked(centers: Vec<f64>, bandwidth: f64, weights: Option<Vec<f64>>) -> Self {
        Self {
            centers,
            bandwidth,
            weights,
        }
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn n(&self) -> f64 {
        self.centers.len() as f64
    }

    /// Unweighted density `(1/N) Σ φ_h(r - r_n)`.
    pub fn density(&self, r: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.centers.iter().map(|&c| normal_pdf((r - c) / h)).sum();
        sum / (self.n() * h)
    }

    /// Weighted density `(1/N) Σ w_n φ_h(r - r_n)`.
    pub fn weighted_density(&self, r: f64) -> Result<f64> {
        let w = self.require_weights()?;
        let h = self.bandwidth;
        let sum: f64 = self
            .centers
            .iter()
            .zip(w)
            .map(|(&c, &wn)| wn * normal_pdf((r - c) / h))
            .sum();
        Ok(sum / (self.n() * h))
    }

    /// Estimated mass on `[0, r0]`.
    pub fn cdf_from_zero(&self, r0: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self
            .centers
            .iter()
            .map(|&c| normal_cdf((r0 - c) / h) - normal_cdf(-c / h))
            .sum();
        (sum / self.n()).max(0.0)
    }

    /// Unweighted mass on `[r0, 1]`.
    pub fn upper_mass(&self, r0: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self
            .centers
            .iter()
            .map(|&c| normal_cdf((1.0 - c) / h) - normal_cdf((r0 - c) / h))
            .sum();
        sum / self.n()
    }

    /// Weighted mass on `[r0, 1]`: `(1/N) Σ w_n [Φ((1-r_n)/h) - Φ((r0-r_n)/h)]`.
    pub fn weighted_upper_mass(&self, r0: f64) -> Result<f64> {
        let w = self.require_weights()?;
        let h = self.bandwidth;
        let sum: f64 = self
            .centers
            .iter()
            .zip(w)
            .map(|(&c, &wn)| wn * (normal_cdf((1.0 - c) / h) - normal_cdf((r0 - c) / h)))
            .sum();
        Ok(sum / self.n())
    }

    fn require_weights(&self) -> Result<&[f64]> {
        self.weights
            .as_deref()
            .ok_or_else(|| Error::invalid("operation needs per-center weights, model has none"))
    }

    /// Threshold `r0` with `cdf_from_zero(r0) = target`, by bisection on
    /// `[0, 1]` to a residual below 1e-12.
    pub fn invert_cdf(&self, target: f64) -> Result<f64> {
        self.invert_cdf_with_tol(target, INVERT_TOL)
    }

    /// As [`invert_cdf`](Self::invert_cdf) with an explicit residual
    /// tolerance. A tolerance of 0 bisects until the bracket stops
    /// shrinking.
    pub fn invert_cdf_with_tol(&self, target: f64, tol: f64) -> Result<f64> {
        let max = self.cdf_from_zero(1.0);
        if target <= 0.0 {
            return Ok(0.0);
        }
        if target > max {
            return Err(Error::Unattainable { target, max });
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut best = (1.0, (max - target).abs());
        for _ in 0..INVERT_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let resid = self.cdf_from_zero(mid) - target;
            if resid.abs() < best.1 || (resid.abs() == best.1 && mid < best.0) {
                best = (mid, resid.abs());
            }
            if resid.abs() < tol {
                return Ok(mid);
            }
            if resid < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if tol > 0.0 && best.1 >= tol {
            return Err(Error::invalid(format!(
                "cdf inversion did not reach tolerance {tol:e} (residual {:e})",
                best.1
            )));
        }
        Ok(best.0)
    }

    /// Inverse CDF by safeguarded Newton starting at `guess`, to full
    /// working precision. Used where many nearby inversions are needed.
    pub fn invert_cdf_from(&self, target: f64, guess: f64) -> Result<f64> {
        let max = self.cdf_from_zero(1.0);
        if target <= 0.0 {
            return Ok(0.0);
        }
        if target > max {
            return Err(Error::Unattainable { target, max });
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut x = guess.clamp(0.0, 1.0);
        for _ in 0..INVERT_MAX_ITER {
            let resid = self.cdf_from_zero(x) - target;
            if resid == 0.0 {
                return Ok(x);
            }
            if resid < 0.0 {
                lo = lo.max(x);
            } else {
                hi = hi.min(x);
            }
            let slope = self.density(x);
            let mut next = x - resid / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) || hi - lo <= f64::EPSILON * hi {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Adaptive Simpson quadrature; independent of the CDF route.
    fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
        }
        #[allow(clippy::too_many_arguments)]
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let (lm, flm, left) = simpson(f, a, fa, m, fm);
            let (rm, frm, right) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
        if a == b {
            return 0.0;
        }
        let (fa, fb) = (f(a), f(b));
        let (m, fm, whole) = simpson(f, a, fa, b, fb);
        rec(f, a, fa, b, fb, m, fm, whole, tol, 50)
    }

    fn random_model(rng: &mut ChaCha8Rng, n: usize, weighted: bool) -> GaussianKernelModel {
        let centers: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let h = rng.random_range(0.02..0.15);
        let m = GaussianKernelModel::new(centers, h).unwrap();
        if weighted {
            let w = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            m.with_weights(w).unwrap()
        } else {
            m
        }
    }

    #[test]
    fn scott_examples() {
        // 32 values with sample sd exactly 0.1: alternate mean ± a.
        let a = 0.1 * (31.0f64 / 32.0).sqrt();
        let values: Vec<f64> = (0..32).map(|i| if i % 2 == 0 { 0.5 + a } else { 0.5 - a }).collect();
        let h = scott_bandwidth(&values);
        assert!((h - 0.05).abs() < 1e-12, "{h}");
        assert_eq!(scott_bandwidth(&[0.7; 10]), MIN_BANDWIDTH);
        assert_eq!(scott_bandwidth(&[0.7]), MIN_BANDWIDTH);
    }

    #[test]
    fn density_examples() {
        let h = 0.05;
        let m = GaussianKernelModel::new(vec![0.5], h).unwrap();
        let peak = 1.0 / ((2.0 * PI).sqrt() * h);
        assert!((m.density(0.5) - peak).abs() < 1e-12);
        let m = GaussianKernelModel::new(vec![0.1], 0.01).unwrap();
        assert!(m.density(0.25) < 1e-20);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, 10, false);
        for _ in 0..5 {
            let r: f64 = rng.random_range(0.0..1.0);
            let mut direct = 0.0;
            for &c in m.centers() {
                let z = (r - c) / m.bandwidth();
                direct += (-z * z / 2.0).exp() / ((2.0 * PI).sqrt() * m.bandwidth()) / 10.0;
            }
            assert!((m.density(r) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_model(&mut rng, 8, false);
        assert_eq!(m.cdf_from_zero(0.0), 0.0);

        let single = GaussianKernelModel::new(vec![0.5], 0.01).unwrap();
        assert!((single.cdf_from_zero(0.5) - 0.5).abs() < 1e-9);

        for _ in 0..6 {
            let r0: f64 = rng.random_range(0.0..1.0);
            let q = integrate(&|r| m.density(r), 0.0, r0, 1e-13);
            assert!((m.cdf_from_zero(r0) - q).abs() < 1e-8, "{} vs {q}", m.cdf_from_zero(r0));
        }
    }

    #[test]
    fn weighted_upper_mass_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&mut rng, 12, true);
        assert_eq!(m.weighted_upper_mass(1.0).unwrap(), 0.0);
        assert!(random_model(&mut rng, 3, false).weighted_upper_mass(0.5).is_err());

        let ones = GaussianKernelModel::new(m.centers().to_vec(), m.bandwidth())
            .unwrap()
            .with_weights(vec![1.0; 12])
            .unwrap();
        for r0 in [0.0, 0.3, 0.61, 0.9] {
            let via_cdf = ones.cdf_from_zero(1.0) - ones.cdf_from_zero(r0);
            assert!((ones.weighted_upper_mass(r0).unwrap() - via_cdf).abs() < 1e-12);
        }

        for _ in 0..6 {
            let r0: f64 = rng.random_range(0.0..1.0);
            let q = integrate(&|r| m.weighted_density(r).unwrap(), r0, 1.0, 1e-13);
            assert!((m.weighted_upper_mass(r0).unwrap() - q).abs() < 1e-8);
        }
    }

    #[test]
    fn invert_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(&mut rng, 10, false);
        assert_eq!(m.invert_cdf(0.0).unwrap(), 0.0);

        let single = GaussianKernelModel::new(vec![0.5], 0.01).unwrap();
        assert!((single.invert_cdf(0.5).unwrap() - 0.5).abs() < 1e-6);

        let max = m.cdf_from_zero(1.0);
        for _ in 0..20 {
            let t = rng.random_range(0.0..max);
            let r0 = m.invert_cdf(t).unwrap();
            assert!((m.cdf_from_zero(r0) - t).abs() < 1e-10);
        }

        match m.invert_cdf(max + 1e-3) {
            Err(Error::Unattainable { max: reported, .. }) => assert_eq!(reported, max),
            other => panic!("expected unattainable, got {other:?}"),
        }
    }

    #[test]
    fn invariants_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let m = random_model(&mut rng, 15, false);
            let mut prev = 0.0;
            for i in 0..=1000 {
                let r = i as f64 / 1000.0;
                assert!(m.density(r) >= 0.0);
                let c = m.cdf_from_zero(r);
                assert!(c >= prev);
                prev = c;
            }
            assert!(m.cdf_from_zero(1.0) < 1.0);

            let ones = m.clone().with_weights(vec![1.0; 15]).unwrap();
            for i in 0..=20 {
                let r0 = i as f64 / 20.0;
                let total = ones.weighted_upper_mass(r0).unwrap() + ones.cdf_from_zero(r0);
                assert!((total - ones.cdf_from_zero(1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_bandwidth_counts_centers() {
        let mut centers = vec![0.31, 0.45, 0.52, 0.66, 0.71, 0.88];
        centers.reverse();
        let m = GaussianKernelModel::new(centers.clone(), MIN_BANDWIDTH).unwrap();
        centers.sort_by(f64::total_cmp);
        for k in 1..centers.len() {
            let mid = 0.5 * (centers[k - 1] + centers[k]);
            let want = k as f64 / centers.len() as f64;
            assert!((m.cdf_from_zero(mid) - want).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_models() {
        assert!(GaussianKernelModel::new(vec![0.5], 0.0).is_err());
        assert!(GaussianKernelModel::new(vec![1.5], 0.1).is_err());
        assert!(GaussianKernelModel::new(vec![0.5], 0.1)
            .unwrap()
            .with_weights(vec![0.5, 0.5])
            .is_err());
        assert!(GaussianKernelModel::new(vec![0.5], 0.1)
            .unwrap()
            .with_weights(vec![1.5])
            .is_err());
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        // Values from the closed form 0.5*erfc(-x/sqrt 2) tabulated elsewhere.
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-17);
        assert!(normal_cdf(-50.0) < 1e-300);
    }
}
