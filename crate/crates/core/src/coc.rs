//! Confidence operating characteristic curves.
//!
//! x: fraction of samples delegated to the expert (`tau`), y: accuracy on
//! the samples the model keeps. A sample is delegated iff its confidence is
//! at or below the threshold, so sample-valued thresholds sweep `tau` from
//! 0 up to exactly 1. The kept set at `tau = 1` is empty and its accuracy is
//! defined as 1.

use std::io::Write;

use crate::calibration::{ece_equal_width, ks_score};
use crate::error::{Error, Result};
use crate::kde::GaussianKernelModel;
use crate::predictions::ConfidenceRecord;

/// Points closer than this to `tau = 1` are dropped from KDE curves.
pub const DIVISION_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Empirical,
    Kde,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CocPoint {
    pub tau: f64,
    pub accuracy: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocCurve {
    points: Vec<CocPoint>,
    kind: CurveKind,
}

/// A KDE-smoothed curve with the indices of threshold points dropped by the
/// division guard.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeCurve {
    pub curve: CocCurve,
    pub dropped: Vec<usize>,
}

/// Ascending stable sort of confidences; returns the permutation.
pub(crate) fn sort_order(confidences: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| confidences[a].total_cmp(&confidences[b]));
    order
}

/// Trapezoidal area under `(x, y)` pairs.
pub(crate) fn trapezoid(points: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut iter = points.into_iter();
    let Some(mut prev) = iter.next() else {
        return 0.0;
    };
    let mut area = 0.0;
    for p in iter {
        area += 0.5 * (prev.1 + p.1) * (p.0 - prev.0);
        prev = p;
    }
    area
}

impl CocCurve {
    pub fn points(&self) -> &[CocPoint] {
        &self.points
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    /// Trapezoidal area over the curve's points.
    pub fn area(&self) -> f64 {
        trapezoid(self.points.iter().map(|p| (p.tau, p.accuracy)))
    }

    /// Smallest `tau` at which the curve first reaches `target`, with linear
    /// interpolation between bracketing points of the running-maximum
    /// envelope. `None` if never reached.
    pub fn tau_at_accuracy(&self, target: f64) -> Option<f64> {
        let mut envelope = f64::NEG_INFINITY;
        let mut prev: Option<(f64, f64)> = None;
        for p in &self.points {
            let acc = envelope.max(p.accuracy);
            if acc >= target {
                return Some(match prev {
                    Some((t0, a0)) if a0 < target && acc > a0 => t0 + (target - a0) / (acc - a0) * (p.tau - t0),
                    _ => p.tau,
                });
            }
            envelope = acc;
            prev = Some((p.tau, acc));
        }
        None
    }

    /// Linearly interpolated accuracy at `tau`. Queries outside the curve's
    /// span return the nearest endpoint. At a repeated `tau` the first point
    /// wins.
    pub fn accuracy_at_tau(&self, tau: f64) -> f64 {
        let pts = &self.points;
        if tau <= pts[0].tau {
            return pts[0].accuracy;
        }
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if tau <= b.tau {
                if b.tau == a.tau {
                    return a.accuracy;
                }
                let t = (tau - a.tau) / (b.tau - a.tau);
                return a.accuracy + t * (b.accuracy - a.accuracy);
            }
        }
        pts[pts.len() - 1].accuracy
    }

    /// Curve as CSV with header `tau,accuracy,threshold`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau", "accuracy", "threshold"])?;
        for p in &self.points {
            w.write_record([p.tau.to_string(), p.accuracy.to_string(), p.threshold.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Build from explicit points, checking the curve invariants.
    pub fn from_points(points: Vec<CocPoint>, kind: CurveKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("curve needs at least one point"));
        }
        if points[0].tau != 0.0 {
            return Err(Error::invalid("first curve point must have tau = 0"));
        }
        for w in points.windows(2) {
            if w[1].tau < w[0].tau {
                return Err(Error::invalid("curve tau values must be nondecreasing"));
            }
        }
        if let Some(p) = points.iter().find(|p| !(0.0..=1.0).contains(&p.accuracy)) {
            return Err(Error::invalid(format!("accuracy {} outside [0, 1]", p.accuracy)));
        }
        Ok(Self { points, kind })
    }
}

/// Empirical COC curve from sample-valued thresholds.
///
/// Point 0 is `(0, overall accuracy)` with threshold 0; point `k` is
/// `(k/N, accuracy of the N-k most confident samples)` with the k-th sorted
/// confidence as threshold.
pub fn empirical_curve(records: &[ConfidenceRecord]) -> Result<CocCurve> {
    let n = records.len();
    if n == 0 {
        return Err(Error::invalid("empirical curve needs at least one record"));
    }
    let conf: Vec<f64> = records.iter().map(|r| r.confidence).collect();
    let order = sort_order(&conf);
    // correct_above[k] = number of correct samples among sorted[k..]
    let mut correct_above = vec![0usize; n + 1];
    for k in (0..n).rev() {
        correct_above[k] = correct_above[k + 1] + usize::from(records[order[k]].correct);
    }
    let nf = n as f64;
    let mut points = Vec::with_capacity(n + 1);
    points.push(CocPoint {
        tau: 0.0,
        accuracy: correct_above[0] as f64 / nf,
        threshold: 0.0,
    });
    for k in 1..=n {
        let kept = n - k;
        let accuracy = if kept == 0 {
            1.0
        } else {
            correct_above[k] as f64 / kept as f64
        };
        points.push(CocPoint {
            tau: k as f64 / nf,
            accuracy,
            threshold: conf[order[k - 1]],
        });
    }
    Ok(CocCurve {
        points,
        kind: CurveKind::Empirical,
    })
}

/// Trapezoidal AUCOC of a curve.
pub fn empirical_aucoc(curve: &CocCurve) -> f64 {
    curve.area()
}

/// KDE-smoothed curve on thresholds `{0} ∪ sorted confidences`, with
/// `tau = cdf(r0)` and `y = weighted upper mass / (1 - tau)`.
pub fn kde_curve(confidences: &[f64], weights: &[f64], bandwidth: f64) -> Result<KdeCurve> {
    if confidences.is_empty() {
        return Err(Error::invalid("KDE curve needs at least one confidence"));
    }
    let model = GaussianKernelModel::new(confidences.to_vec(), bandwidth)?.with_weights(weights.to_vec())?;
    Ok(kde_curve_unchecked(&model))
}

pub(crate) fn kde_thresholds(confidences: &[f64]) -> Vec<f64> {
    let order = sort_order(confidences);
    std::iter::once(0.0).chain(order.iter().map(|&i| confidences[i])).collect()
}

pub(crate) fn kde_curve_unchecked(model: &GaussianKernelModel) -> KdeCurve {
    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for (k, r0) in kde_thresholds(model.centers()).into_iter().enumerate() {
        let tau = model.cdf_from_zero(r0);
        if 1.0 - tau < DIVISION_GUARD {
            dropped.push(k);
            continue;
        }
        let upper = model.weighted_upper_mass(r0).expect("weighted model");
        points.push(CocPoint {
            tau,
            accuracy: upper / (1.0 - tau),
            threshold: r0,
        });
    }
    KdeCurve {
        curve: CocCurve {
            points,
            kind: CurveKind::Kde,
        },
        dropped,
    }
}

/// KDE AUCOC with arbitrary weights in `[0, 1]` (e.g. correctness).
pub fn kde_area(confidences: &[f64], weights: &[f64], bandwidth: f64) -> Result<f64> {
    Ok(kde_curve(confidences, weights, bandwidth)?.curve.area())
}

/// KDE AUCOC with the true-class probability as the per-sample weight.
pub fn kde_aucoc(records: &[ConfidenceRecord], bandwidth: f64) -> Result<f64> {
    let conf: Vec<f64> = records.iter().map(|r| r.confidence).collect();
    let w: Vec<f64> = records.iter().map(|r| r.true_prob).collect();
    kde_area(&conf, &w, bandwidth)
}

/// Summary of one model in the two-model ranking fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelSummary {
    pub name: &'static str,
    pub records: Vec<ConfidenceRecord>,
    pub accuracy: f64,
    pub ece_5bin: f64,
    pub ks: f64,
    pub aucoc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyReport {
    pub a: ToyModelSummary,
    pub b: ToyModelSummary,
    pub equal_accuracy: bool,
    pub equal_ece: bool,
    pub equal_ks: bool,
    pub a_beats_b: bool,
}

impl ToyReport {
    /// The three properties the fixture exists to show.
    pub fn holds(&self) -> bool {
        self.equal_accuracy && self.equal_ece && self.a_beats_b
    }
}

pub const TOY_CONFIDENCES: [f64; 5] = [0.45, 0.55, 0.65, 0.70, 0.75];

/// Two models with identical confidences, accuracy and per-bin correct
/// counts (5 equal-width bins), differing only in which samples within each
/// bin are correct. Model A places its correct samples above its errors.
pub fn toy_comparison() -> ToyReport {
    // bins: [0.4, 0.6) holds 0.45, 0.55; [0.6, 0.8) holds 0.65, 0.70, 0.75
    let a_correct = [false, true, false, true, true];
    let b_correct = [true, false, true, true, false];
    let summarize = |name: &'static str, correct: [bool; 5]| {
        let records: Vec<ConfidenceRecord> = TOY_CONFIDENCES
            .iter()
            .zip(correct)
            .map(|(&r, c)| ConfidenceRecord::new(r, if c { r } else { (1.0 - r) / 2.0 }, c, 0))
            .collect();
        let accuracy = records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64;
        let curve = empirical_curve(&records).expect("non-empty fixture");
        ToyModelSummary {
            name,
            accuracy,
            ece_5bin: ece_equal_width(&records, 5).expect("valid bins"),
            ks: ks_score(&records).expect("non-empty fixture"),
            aucoc: empirical_aucoc(&curve),
            records,
        }
    };
    let a = summarize("A", a_correct);
    let b = summarize("B", b_correct);
    ToyReport {
        equal_accuracy: a.accuracy == b.accuracy,
        equal_ece: (a.ece_5bin - b.ece_5bin).abs() < 1e-12,
        equal_ks: (a.ks - b.ks).abs() < 1e-12,
        a_beats_b: a.aucoc > b.aucoc,
        a,
        b,
    }
}
