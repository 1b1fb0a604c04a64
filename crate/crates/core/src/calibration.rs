//! Calibration metrics and temperature scaling.
//!
//! All metrics are raw fractions; [`CalibrationReport::percent`] gives the
//! ×100 view used in result tables.

use serde::Serialize;

use crate::coc::sort_order;
use crate::error::{Error, Result};
use crate::predictions::{ConfidenceRecord, PredictionSet};

pub const DEFAULT_BINS: usize = 15;
const NLL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    /// `None` when there are fewer samples than bins.
    pub ece_em: Option<f64>,
    pub ece_ew: f64,
    pub cw_ece: f64,
    pub ks: f64,
    pub brier: f64,
    pub nll: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationPercent {
    pub ece_em: Option<f64>,
    pub ece_ew: f64,
    pub cw_ece: f64,
    pub ks: f64,
    pub brier: f64,
}

impl CalibrationReport {
    pub fn compute(preds: &PredictionSet, bins: usize) -> Result<Self> {
        let records = preds.records();
        let ece_em = if records.len() >= bins {
            Some(ece_equal_mass(&records, bins)?)
        } else {
            None
        };
        Ok(Self {
            ece_em,
            ece_ew: ece_equal_width(&records, bins)?,
            cw_ece: classwise_ece(preds, bins)?,
            ks: ks_score(&records)?,
            brier: brier(preds),
            nll: nll(preds),
            bins,
        })
    }

    pub fn percent(&self) -> CalibrationPercent {
        CalibrationPercent {
            ece_em: self.ece_em.map(|v| 100.0 * v),
            ece_ew: 100.0 * self.ece_ew,
            cw_ece: 100.0 * self.cw_ece,
            ks: 100.0 * self.ks,
            brier: 100.0 * self.brier,
        }
    }
}

/// Fitted temperature and NLL at `T = 1` and at the fitted value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub temperature: f64,
    pub nll_before: f64,
    pub nll_after: f64,
}

fn weighted_gap(groups: impl Iterator<Item = (usize, f64, f64)>, n: usize) -> f64 {
    // (count, sum of correctness, sum of confidence) per group
    groups
        .filter(|(count, _, _)| *count > 0)
        .map(|(count, acc_sum, conf_sum)| {
            let c = count as f64;
            (c / n as f64) * (acc_sum / c - conf_sum / c).abs()
        })
        .sum()
}

/// Equal-mass ECE: confidence-sorted samples split into `bins` contiguous
/// groups whose sizes differ by at most one (larger groups first).
pub fn ece_equal_mass(records: &[ConfidenceRecord], bins: usize) -> Result<f64> {
    let n = records.len();
    if bins == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    if n < bins {
        return Err(Error::invalid(format!(
            "equal-mass ECE with {bins} bins needs at least {bins} samples, got {n}; use --bins {n} or fewer"
        )));
    }
    let conf: Vec<f64> = records.iter().map(|r| r.confidence).collect();
    let order = sort_order(&conf);
    let (base, extra) = (n / bins, n % bins);
    let mut start = 0;
    let groups = (0..bins).map(|b| {
        let size = base + usize::from(b < extra);
        let slice = &order[start..start + size];
        start += size;
        let acc: f64 = slice.iter().map(|&i| records[i].c()).sum();
        let cf: f64 = slice.iter().map(|&i| records[i].confidence).sum();
        (size, acc, cf)
    });
    Ok(weighted_gap(groups.collect::<Vec<_>>().into_iter(), n))
}

/// Bin index for width-`1/bins` bins on `[0, 1]`, last bin closed at 1.
pub(crate) fn width_bin(value: f64, bins: usize) -> usize {
    ((value * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

fn equal_width_gap(values: impl Iterator<Item = (f64, f64)>, bins: usize, n: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    let mut acc = vec![0.0; bins];
    let mut conf = vec![0.0; bins];
    for (v, target) in values {
        let b = width_bin(v, bins);
        counts[b] += 1;
        acc[b] += target;
        conf[b] += v;
    }
    weighted_gap((0..bins).map(|b| (counts[b], acc[b], conf[b])), n)
}

/// Equal-width ECE over `bins` bins of width `1/bins`.
pub fn ece_equal_width(records: &[ConfidenceRecord], bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    if records.is_empty() {
        return Err(Error::invalid("ECE needs at least one record"));
    }
    Ok(equal_width_gap(records.iter().map(|r| (r.confidence, r.c())), bins, records.len()))
}

/// Class-wise ECE: per class, equal-width binned gap between `p(k|x)` and
/// the indicator `label == k`; averaged over classes.
pub fn classwise_ece(preds: &PredictionSet, bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    let k = preds.num_classes();
    let total: f64 = (0..k)
        .map(|class| {
            let values = preds
                .rows()
                .map(|(p, label)| (p[class], if label == class { 1.0 } else { 0.0 }));
            equal_width_gap(values, bins, preds.len())
        })
        .sum();
    Ok(total / k as f64)
}

/// KS calibration score: max over confidence-sorted prefixes of the absolute
/// cumulative gap `(1/N) Σ (r_i - c_i)`.
pub fn ks_score(records: &[ConfidenceRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("KS score needs at least one record"));
    }
    let conf: Vec<f64> = records.iter().map(|r| r.confidence).collect();
    let n = records.len() as f64;
    let mut cum = 0.0f64;
    let mut best = 0.0f64;
    for i in sort_order(&conf) {
        cum += records[i].confidence - records[i].c();
        best = best.max(cum.abs());
    }
    Ok(best / n)
}

/// Mean squared distance between the probability row and the one-hot label.
pub fn brier(preds: &PredictionSet) -> f64 {
    let total: f64 = preds
        .rows()
        .map(|(p, label)| {
            p.iter()
                .enumerate()
                .map(|(j, &pj)| {
                    let t = if j == label { 1.0 } else { 0.0 };
                    (pj - t) * (pj - t)
                })
                .sum::<f64>()
        })
        .sum();
    total / preds.len() as f64
}

/// Mean negative log of the true-class probability (clamped at 1e-12).
pub fn nll(preds: &PredictionSet) -> f64 {
    let total: f64 = preds.rows().map(|(p, label)| -p[label].max(NLL_EPS).ln()).sum();
    total / preds.len() as f64
}

fn nll_at_log_temperature(logits: &[Vec<f64>], labels: &[usize], log_t: f64) -> f64 {
    let t = log_t.exp();
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max) / t;
            let lse = max + row.iter().map(|z| (z / t - max).exp()).sum::<f64>().ln();
            let logp = row[y] / t - lse;
            -logp.max(NLL_EPS.ln())
        })
        .sum();
    total / labels.len() as f64
}

const LOG_T_RANGE: (f64, f64) = (-3.0, 3.0);
const GRID_POINTS: usize = 50;
const GOLDEN_ITERS: usize = 200;
const LOG_T_TOL: f64 = 1e-6;

/// Fit a single temperature by minimizing NLL of `softmax(logits / T)`.
///
/// A 50-point grid over `log T ∈ [-3, 3]` brackets the minimum, golden
/// section refines it to 1e-6 in `log T`. The returned NLL is never worse
/// than any grid value or than `T = 1`.
pub fn temperature_scale(preds: &PredictionSet) -> Result<CalibrationResult> {
    if !preds.has_logits() {
        return Err(Error::invalid(
            "temperature scaling needs logits; probability-only inputs cannot be rescaled",
        ));
    }
    let logits: Vec<Vec<f64>> = (0..preds.len()).map(|i| preds.logits(i).unwrap().to_vec()).collect();
    fit_temperature(&logits, preds.labels())
}

pub fn fit_temperature(logits: &[Vec<f64>], labels: &[usize]) -> Result<CalibrationResult> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(Error::invalid("temperature scaling needs matching, non-empty logits and labels"));
    }
    let f = |lt: f64| nll_at_log_temperature(logits, labels, lt);
    let (lo, hi) = LOG_T_RANGE;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..GRID_POINTS)
        .map(|i| {
            let lt = lo + step * i as f64;
            (lt, f(lt))
        })
        .collect();
    let best_idx = (0..GRID_POINTS)
        .min_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1))
        .expect("non-empty grid");

    let mut a = grid[best_idx.saturating_sub(1)].0;
    let mut b = grid[(best_idx + 1).min(GRID_POINTS - 1)].0;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if (b - a).abs() < LOG_T_TOL {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let refined = 0.5 * (a + b);
    let nll_before = f(0.0);
    let mut best = (refined, f(refined));
    for &(lt, v) in grid.iter().chain(std::iter::once(&(0.0, nll_before))) {
        if v < best.1 {
            best = (lt, v);
        }
    }
    Ok(CalibrationResult {
        temperature: best.0.exp(),
        nll_before,
        nll_after: best.1,
    })
}
