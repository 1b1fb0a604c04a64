//! AUCOC loss `-ln(A)` with closed-form gradients.
//!
//! `A` is the trapezoidal area of the KDE-smoothed COC curve with the
//! true-class probability `r*` as the per-sample weight:
//!
//! ```text
//! tau(r0) = (1/N) Σ [Φ((r0 - r_n)/h) - Φ(-r_n/h)]
//! U(r0)   = (1/N) Σ r*_n [Φ((1 - r_n)/h) - Φ((r0 - r_n)/h)]
//! y(r0)   = U(r0) / (1 - tau(r0))
//! ```
//!
//! Gradients hold the `tau` grid fixed: every threshold moves so that its
//! `tau` stays put, which adds `E[c|r0] · ∂tau/∂θ` to `∂U/∂θ`, with
//! `E[c|r0]` the ratio of `r*`-weighted to unweighted kernel sums at `r0`.
//! [`fixed_tau_area_oracle`] re-solves for the moved thresholds explicitly
//! and is the finite-difference reference for the closed form. The
//! bandwidth is a constant for differentiation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::coc::{kde_thresholds, DIVISION_GUARD};
use crate::error::{Error, Result};
use crate::kde::{normal_cdf, normal_pdf, scott_bandwidth, GaussianKernelModel};
use crate::predictions::{extract_records, ConfidenceRecord, PredictionSet};

/// Floor for the area inside the logarithm.
pub const AREA_FLOOR: f64 = 1e-12;
/// Floor for the unweighted kernel sum in the `E[c|r0]` ratio.
pub const KERNEL_SUM_FLOOR: f64 = 1e-300;

/// Confidences and true-class probabilities of one batch plus the KDE
/// bandwidth used for it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    confidence: Vec<f64>,
    true_prob: Vec<f64>,
    bandwidth: f64,
}

/// `∂/∂r_n` and `∂/∂r*_n` of either the area or the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub d_confidence: Vec<f64>,
    pub d_true_prob: Vec<f64>,
}

impl LossGradients {
    fn scaled(&self, factor: f64) -> Self {
        Self {
            d_confidence: self.d_confidence.iter().map(|g| g * factor).collect(),
            d_true_prob: self.d_true_prob.iter().map(|g| g * factor).collect(),
        }
    }
}

impl LossBatch {
    /// Batch with Scott's-rule bandwidth over the confidences.
    pub fn new(confidence: Vec<f64>, true_prob: Vec<f64>) -> Result<Self> {
        let h = scott_bandwidth(&confidence);
        Self::with_bandwidth(confidence, true_prob, h)
    }

    pub fn with_bandwidth(confidence: Vec<f64>, true_prob: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if confidence.len() < 2 {
            return Err(Error::invalid(format!("loss batch needs N >= 2, got {}", confidence.len())));
        }
        if confidence.len() != true_prob.len() {
            return Err(Error::invalid("confidence and true-class probability lengths differ"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        for (i, (&r, &rs)) in confidence.iter().zip(&true_prob).enumerate() {
            if !(0.0 <= rs && rs <= r && r <= 1.0) {
                return Err(Error::invalid(format!(
                    "sample {i}: need 0 <= r* <= r <= 1, got r = {r}, r* = {rs}"
                )));
            }
        }
        Ok(Self {
            confidence,
            true_prob,
            bandwidth,
        })
    }

    pub fn from_records(records: &[ConfidenceRecord]) -> Result<Self> {
        Self::new(
            records.iter().map(|r| r.confidence).collect(),
            records.iter().map(|r| r.true_prob).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.confidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidence.is_empty()
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    pub fn true_prob(&self) -> &[f64] {
        &self.true_prob
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    fn model(&self) -> GaussianKernelModel {
        GaussianKernelModel::from_parts_unchecked(self.confidence.clone(), self.bandwidth, Some(self.true_prob.clone()))
    }
}

/// The threshold grid of a batch after the division guard.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaGrid {
    pub thresholds: Vec<f64>,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub area: f64,
    /// Indices (into `{0} ∪ sorted r`) removed because `1 - tau < 1e-12`.
    pub dropped: Vec<usize>,
}

/// Trapezoid weight of each grid point: `(Δtau_left + Δtau_right) / 2`.
fn trapezoid_weights(taus: &[f64]) -> Vec<f64> {
    let m = taus.len();
    let mut w = vec![0.0; m];
    for k in 1..m {
        let half = 0.5 * (taus[k] - taus[k - 1]);
        w[k - 1] += half;
        w[k] += half;
    }
    w
}

fn grid_of(model: &GaussianKernelModel) -> AreaGrid {
    let mut thresholds = Vec::new();
    let mut taus = Vec::new();
    let mut values = Vec::new();
    let mut dropped = Vec::new();
    for (k, r0) in kde_thresholds(model.centers()).into_iter().enumerate() {
        let tau = model.cdf_from_zero(r0);
        if 1.0 - tau < DIVISION_GUARD {
            dropped.push(k);
            continue;
        }
        let upper = model.weighted_upper_mass(r0).expect("weighted model");
        thresholds.push(r0);
        taus.push(tau);
        values.push(upper / (1.0 - tau));
    }
    let area = crate::coc::trapezoid(taus.iter().copied().zip(values.iter().copied()));
    AreaGrid {
        thresholds,
        taus,
        values,
        area,
        dropped,
    }
}

/// Area `A` and its grid.
pub fn aucoc_area(batch: &LossBatch) -> AreaGrid {
    grid_of(&batch.model())
}

/// `-ln(A)`.
pub fn aucoc_loss(batch: &LossBatch) -> Result<f64> {
    let area = aucoc_area(batch).area;
    check_area(area)?;
    Ok(-area.ln())
}

fn check_area(area: f64) -> Result<()> {
    if area.is_nan() || area <= AREA_FLOOR {
        return Err(Error::DegenerateBatch(format!(
            "AUCOC = {area:e} is at or below the floor {AREA_FLOOR:e}"
        )));
    }
    Ok(())
}

/// Area gradient with the grid points whose `E[c|r0]` ratio was undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaGradient {
    pub area: f64,
    pub grads: LossGradients,
    /// Grid points whose unweighted kernel sum fell below the floor; their
    /// threshold-shift term is zero.
    pub degenerate_points: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// Closed-form `∂A/∂r_n` and `∂A/∂r*_n` under the fixed-`tau` constraint.
pub fn aucoc_area_grad(batch: &LossBatch) -> AreaGradient {
    let grid = aucoc_area(batch);
    let n = batch.len();
    let nf = n as f64;
    let h = batch.bandwidth;
    let norm = 1.0 / (nf * h);
    let weights = trapezoid_weights(&grid.taus);
    let r = &batch.confidence;
    let w = &batch.true_prob;

    // per-sample terms independent of the threshold
    let pdf_top: Vec<f64> = r.iter().map(|&rn| normal_pdf((1.0 - rn) / h)).collect();
    let pdf_zero: Vec<f64> = r.iter().map(|&rn| normal_pdf(-rn / h)).collect();
    let cdf_top: Vec<f64> = r.iter().map(|&rn| normal_cdf((1.0 - rn) / h)).collect();

    let mut d_r = vec![0.0; n];
    let mut d_w = vec![0.0; n];
    let mut degenerate = Vec::new();
    let mut pdf_r0 = vec![0.0; n];
    for (k, (&r0, &tau)) in grid.thresholds.iter().zip(&grid.taus).enumerate() {
        let coef = weights[k] / (1.0 - tau);
        if coef == 0.0 {
            continue;
        }
        let mut kernel_sum = 0.0;
        let mut weighted_sum = 0.0;
        for j in 0..n {
            pdf_r0[j] = normal_pdf((r0 - r[j]) / h);
            kernel_sum += pdf_r0[j];
            weighted_sum += w[j] * pdf_r0[j];
        }
        let ratio = if kernel_sum < KERNEL_SUM_FLOOR {
            degenerate.push(k);
            0.0
        } else {
            weighted_sum / kernel_sum
        };
        for j in 0..n {
            let d_upper = w[j] * (pdf_r0[j] - pdf_top[j]) * norm;
            let d_tau = -(pdf_r0[j] - pdf_zero[j]) * norm;
            d_r[j] += coef * (d_upper + ratio * d_tau);
            d_w[j] += coef * (cdf_top[j] - normal_cdf((r0 - r[j]) / h)) / nf;
        }
    }
    AreaGradient {
        area: grid.area,
        grads: LossGradients {
            d_confidence: d_r,
            d_true_prob: d_w,
        },
        degenerate_points: degenerate,
        dropped: grid.dropped,
    }
}

/// Loss value, area and loss gradients in one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    pub area: f64,
    pub grads: LossGradients,
}

pub fn aucoc_loss_and_grad(batch: &LossBatch) -> Result<LossEval> {
    let g = aucoc_area_grad(batch);
    check_area(g.area)?;
    Ok(LossEval {
        loss: -g.area.ln(),
        area: g.area,
        grads: g.grads.scaled(-1.0 / g.area),
    })
}

/// `∂(-ln A)/∂r_n`, `∂(-ln A)/∂r*_n`.
pub fn aucoc_loss_grad(batch: &LossBatch) -> Result<LossGradients> {
    Ok(aucoc_loss_and_grad(batch)?.grads)
}

/// Additive perturbation of a batch's inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub d_confidence: Vec<f64>,
    pub d_true_prob: Vec<f64>,
}

impl Perturbation {
    pub fn zero(n: usize) -> Self {
        Self {
            d_confidence: vec![0.0; n],
            d_true_prob: vec![0.0; n],
        }
    }

    /// A single coordinate moved by `step`.
    pub fn coordinate(n: usize, index: usize, on_true_prob: bool, step: f64) -> Self {
        let mut p = Self::zero(n);
        if on_true_prob {
            p.d_true_prob[index] = step;
        } else {
            p.d_confidence[index] = step;
        }
        p
    }

    fn is_zero(&self) -> bool {
        self.d_confidence.iter().chain(&self.d_true_prob).all(|&d| d == 0.0)
    }
}

/// Area of the perturbed batch evaluated on the unperturbed batch's `tau`
/// grid: each frozen `tau_k` is mapped back to a threshold on the perturbed
/// kernel model, and `y` is evaluated there.
pub fn fixed_tau_area_oracle(batch: &LossBatch, perturbation: &Perturbation) -> Result<f64> {
    let n = batch.len();
    if perturbation.d_confidence.len() != n || perturbation.d_true_prob.len() != n {
        return Err(Error::invalid("perturbation length does not match the batch"));
    }
    let reference = aucoc_area(batch);
    if perturbation.is_zero() {
        return Ok(reference.area);
    }
    let centers: Vec<f64> = batch
        .confidence
        .iter()
        .zip(&perturbation.d_confidence)
        .map(|(r, d)| r + d)
        .collect();
    let weights: Vec<f64> = batch
        .true_prob
        .iter()
        .zip(&perturbation.d_true_prob)
        .map(|(r, d)| r + d)
        .collect();
    let model = GaussianKernelModel::from_parts_unchecked(centers, batch.bandwidth, Some(weights));
    let mut values = Vec::with_capacity(reference.taus.len());
    for (&tau, &r0) in reference.taus.iter().zip(&reference.thresholds) {
        let moved = model.invert_cdf_from(tau, r0)?;
        let upper = model.weighted_upper_mass(moved)?;
        values.push(upper / (1.0 - tau));
    }
    Ok(crate::coc::trapezoid(reference.taus.iter().copied().zip(values)))
}

/// Upper bound on the loss obtained by moving the logarithm inside the
/// sample sum (Jensen).
///
/// The area is linear in the weights, `A = Σ a_n r*_n` with `a_n ≥ 0`.
/// Normalizing by `W = Σ a_n` gives
/// `-ln A ≤ -ln W - Σ (a_n / W) ln r*_n`. When the kernel mass fills
/// `[0, 1]` (so `W = 1`) this is the plain log-inside-the-integral form.
pub fn jensen_upper_bound(batch: &LossBatch) -> Result<f64> {
    if let Some(i) = batch.true_prob.iter().position(|&v| v <= 0.0) {
        return Err(Error::invalid(format!(
            "sample {i}: true-class probability is 0, the log-inside bound is undefined"
        )));
    }
    let coeffs = aucoc_area_grad(batch).grads.d_true_prob;
    let total: f64 = coeffs.iter().sum();
    check_area(total)?;
    let inner: f64 = coeffs
        .iter()
        .zip(&batch.true_prob)
        .map(|(a, w)| (a / total) * w.ln())
        .sum();
    Ok(-total.ln() - inner)
}

/// Central-difference agreement between [`aucoc_area_grad`] and
/// [`fixed_tau_area_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - fd| / max(|fd|, 1e-4)`; a coordinate passes when
    /// this is below 1e-4, i.e. relative error below 1e-4 or, for entries
    /// under 1e-4, absolute error below 1e-8.
    pub worst_error: f64,
    pub worst_abs: f64,
    pub coordinates: usize,
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_REL_TOL: f64 = 1e-4;
pub const GRAD_CHECK_ABS_FLOOR: f64 = 1e-8;

impl GradCheck {
    pub fn passes(&self) -> bool {
        self.worst_error < GRAD_CHECK_REL_TOL
    }
}

pub(crate) fn scaled_error(analytic: f64, reference: f64) -> f64 {
    let floor = GRAD_CHECK_ABS_FLOOR / GRAD_CHECK_REL_TOL;
    (analytic - reference).abs() / reference.abs().max(floor)
}

pub fn grad_check(batch: &LossBatch) -> Result<GradCheck> {
    let analytic = aucoc_area_grad(batch).grads;
    let n = batch.len();
    let mut worst = 0.0f64;
    let mut worst_abs = 0.0f64;
    for on_true_prob in [false, true] {
        let grads = if on_true_prob { &analytic.d_true_prob } else { &analytic.d_confidence };
        for (i, &g) in grads.iter().enumerate() {
            let plus = fixed_tau_area_oracle(batch, &Perturbation::coordinate(n, i, on_true_prob, GRAD_CHECK_STEP))?;
            let minus = fixed_tau_area_oracle(batch, &Perturbation::coordinate(n, i, on_true_prob, -GRAD_CHECK_STEP))?;
            let fd = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
            worst = worst.max(scaled_error(g, fd));
            worst_abs = worst_abs.max((g - fd).abs());
        }
    }
    Ok(GradCheck {
        worst_error: worst,
        worst_abs,
        coordinates: 2 * n,
    })
}

/// Random softmax predictions turned into a loss batch: `n` samples, `k`
/// classes, logits `N(0, 1.5²)` with a boost of 1.5 on the true class.
pub fn random_batch(seed: u64, n: usize, k: usize) -> Result<LossBatch> {
    LossBatch::from_records(&extract_records(&random_predictions(seed, n, k)?))
}

pub fn random_predictions(seed: u64, n: usize, k: usize) -> Result<PredictionSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.5).expect("valid normal");
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..k);
        let row: Vec<f64> = (0..k)
            .map(|j| normal.sample(&mut rng) + if j == label { 1.5 } else { 0.0 })
            .collect();
        rows.push(row);
        labels.push(label);
    }
    PredictionSet::from_logits(rows, labels)
}

/// Batch whose confidences cluster in near-ties (groups within 1e-9).
pub fn near_tie_batch(seed: u64, n: usize) -> Result<LossBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut confidence = Vec::with_capacity(n);
    let mut true_prob = Vec::with_capacity(n);
    let mut base = 0.5;
    for i in 0..n {
        if i % 3 == 0 {
            base = rng.random_range(0.35..0.95);
        }
        let r = base + 1e-10 * (i % 3) as f64;
        let correct = rng.random_bool(0.6);
        confidence.push(r);
        true_prob.push(if correct { r } else { rng.random_range(0.0..(1.0 - r).min(r)) });
    }
    LossBatch::new(confidence, true_prob)
}
