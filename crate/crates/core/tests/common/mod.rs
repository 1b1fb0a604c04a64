//! Brute-force reference implementations and random instance generators
//! shared by the integration tests. Each oracle recomputes its quantity
//! from the definition without reusing library internals.

#![allow(dead_code)]

use std::path::Path;

use cockit::predictions::{ConfidenceRecord, PredictionSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random logits with a per-instance signal strength on the true class.
pub fn random_logit_set(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PredictionSet {
    let spread: f64 = rng.random_range(0.5..3.0);
    let boost: f64 = rng.random_range(0.0..3.0);
    let normal = Normal::new(0.0, spread).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.random_range(0..k);
        rows.push(
            (0..k)
                .map(|j| normal.sample(rng) + if j == y { boost } else { 0.0 })
                .collect(),
        );
        labels.push(y);
    }
    PredictionSet::from_logits(rows, labels).unwrap()
}

/// Records with pairwise distinct confidences in (0, 1).
pub fn distinct_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<ConfidenceRecord> {
    let mut seen: Vec<f64> = Vec::new();
    while seen.len() < n {
        let r: f64 = rng.random_range(0.05..0.999);
        if seen.iter().all(|&s| s != r) {
            seen.push(r);
        }
    }
    seen.into_iter()
        .map(|r| {
            let correct = rng.random_bool(r);
            ConfidenceRecord::new(r, if correct { r } else { rng.random_range(0.0..r.min(1.0 - r)) }, correct, 0)
        })
        .collect()
}

/// COC points by scanning every candidate threshold: a sample is delegated
/// when its confidence is at or below the threshold. Requires distinct
/// confidences so each threshold delegates exactly one more sample.
pub fn brute_coc_points(records: &[ConfidenceRecord]) -> Vec<(f64, f64, f64)> {
    let n = records.len() as f64;
    let mut thresholds: Vec<f64> = records.iter().map(|r| r.confidence).collect();
    thresholds.sort_by(f64::total_cmp);
    let point = |t: Option<f64>| {
        let kept: Vec<&ConfidenceRecord> = records
            .iter()
            .filter(|r| t.is_none_or(|t| r.confidence > t))
            .collect();
        let delegated = records.len() - kept.len();
        let acc = if kept.is_empty() {
            1.0
        } else {
            kept.iter().filter(|r| r.correct).count() as f64 / kept.len() as f64
        };
        (delegated as f64 / n, acc, t.unwrap_or(0.0))
    };
    std::iter::once(point(None))
        .chain(thresholds.iter().map(|&t| point(Some(t))))
        .collect()
}

/// Integral of the piecewise-linear interpolant by Simpson's rule on each
/// segment (exact for linear pieces).
pub fn piecewise_linear_integral(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            let mid = 0.5 * (y0 + y1);
            (x1 - x0) / 6.0 * (y0 + 4.0 * mid + y1)
        })
        .sum()
}

fn gap_over_bins(members: &[Vec<(f64, f64)>], n: usize) -> f64 {
    members
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| {
            let cnt = m.len() as f64;
            let conf = m.iter().map(|p| p.0).sum::<f64>() / cnt;
            let acc = m.iter().map(|p| p.1).sum::<f64>() / cnt;
            cnt / n as f64 * (acc - conf).abs()
        })
        .sum()
}

/// Equal-width bins: `[b/B, (b+1)/B)`, the last one closed at 1.
pub fn oracle_equal_width(values: &[(f64, f64)], bins: usize) -> f64 {
    let mut members = vec![Vec::new(); bins];
    for &(v, t) in values {
        let b = (0..bins)
            .find(|&b| {
                let hi = (b + 1) as f64 / bins as f64;
                v < hi || b == bins - 1
            })
            .unwrap();
        members[b].push((v, t));
    }
    gap_over_bins(&members, values.len())
}

pub fn oracle_ece_ew(records: &[ConfidenceRecord], bins: usize) -> f64 {
    let values: Vec<(f64, f64)> = records.iter().map(|r| (r.confidence, f64::from(u8::from(r.correct)))).collect();
    oracle_equal_width(&values, bins)
}

/// Equal-mass bins: the sample with rank `i` (stable ascending order) goes
/// to the bin whose cumulative size first exceeds `i`; the first `N mod B`
/// bins hold one extra sample.
pub fn oracle_ece_em(records: &[ConfidenceRecord], bins: usize) -> f64 {
    let n = records.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| records[a].confidence.total_cmp(&records[b].confidence));
    let size = |b: usize| n / bins + usize::from(b < n % bins);
    let mut members = vec![Vec::new(); bins];
    for (rank, &i) in idx.iter().enumerate() {
        let mut cum = 0;
        let b = (0..bins)
            .find(|&b| {
                cum += size(b);
                rank < cum
            })
            .unwrap();
        members[b].push((records[i].confidence, f64::from(u8::from(records[i].correct))));
    }
    gap_over_bins(&members, n)
}

pub fn oracle_cw_ece(preds: &PredictionSet, bins: usize) -> f64 {
    let k = preds.num_classes();
    (0..k)
        .map(|class| {
            let values: Vec<(f64, f64)> = (0..preds.len())
                .map(|i| (preds.probs(i)[class], f64::from(u8::from(preds.labels()[i] == class))))
                .collect();
            oracle_equal_width(&values, bins)
        })
        .sum::<f64>()
        / k as f64
}

/// Max over sorted prefixes of the mean confidence-minus-correctness gap,
/// each prefix summed from scratch.
pub fn oracle_ks(records: &[ConfidenceRecord]) -> f64 {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.confidence.total_cmp(&b.confidence));
    let n = sorted.len() as f64;
    (1..=sorted.len())
        .map(|m| {
            let s: f64 = sorted[..m]
                .iter()
                .map(|r| r.confidence - f64::from(u8::from(r.correct)))
                .sum();
            (s / n).abs()
        })
        .fold(0.0, f64::max)
}

pub fn oracle_brier(preds: &PredictionSet) -> f64 {
    let mut total = 0.0;
    for i in 0..preds.len() {
        for (j, &p) in preds.probs(i).iter().enumerate() {
            let t = if preds.labels()[i] == j { 1.0 } else { 0.0 };
            total += (p - t).powi(2);
        }
    }
    total / preds.len() as f64
}

/// NLL from the logits via a log-sum-exp written out directly.
pub fn oracle_nll_logits(preds: &PredictionSet, temperature: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..preds.len() {
        let z: Vec<f64> = preds.logits(i).unwrap().iter().map(|v| v / temperature).collect();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[preds.labels()[i]];
    }
    total / preds.len() as f64
}

/// Pairwise AUROC with half credit for ties.
pub fn oracle_auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in pos {
        for &b in neg {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Exact sign-flip p-value by listing every sign vector explicitly.
pub fn oracle_permutation_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let observed = (d.iter().sum::<f64>() / n as f64).abs();
    let mut signs = vec![vec![]];
    for _ in 0..n {
        signs = signs
            .into_iter()
            .flat_map(|s: Vec<f64>| {
                let mut plus = s.clone();
                plus.push(1.0);
                let mut minus = s;
                minus.push(-1.0);
                [plus, minus]
            })
            .collect();
    }
    let tol = 1e-12 * d.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let hits = signs
        .iter()
        .filter(|s| {
            let stat = (s.iter().zip(&d).map(|(s, v)| s * v).sum::<f64>() / n as f64).abs();
            stat >= observed - tol
        })
        .count();
    hits as f64 / signs.len() as f64
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}
