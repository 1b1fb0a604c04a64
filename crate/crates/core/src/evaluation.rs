//! Metric bundle shared by the `report` command and trainer evaluation.

use serde::Serialize;

use crate::calibration::CalibrationReport;
use crate::coc::{empirical_aucoc, empirical_curve, kde_aucoc};
use crate::error::Result;
use crate::kde::scott_bandwidth;
use crate::predictions::PredictionSet;

/// Delegated fraction needed to reach one accuracy target, `None` if the
/// curve never gets there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauAtAccuracy {
    pub target: f64,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub n: usize,
    pub k: usize,
    pub accuracy: f64,
    pub aucoc_empirical: f64,
    pub aucoc_kde: f64,
    pub bandwidth: f64,
    pub tau_at_accuracy: Vec<TauAtAccuracy>,
    pub calibration: CalibrationReport,
}

pub fn evaluate_predictions(preds: &PredictionSet, bins: usize, targets: &[f64]) -> Result<Evaluation> {
    let records = preds.records();
    let curve = empirical_curve(&records)?;
    let confidences: Vec<f64> = records.iter().map(|r| r.confidence).collect();
    let bandwidth = scott_bandwidth(&confidences);
    Ok(Evaluation {
        n: preds.len(),
        k: preds.num_classes(),
        accuracy: preds.accuracy(),
        aucoc_empirical: empirical_aucoc(&curve),
        aucoc_kde: kde_aucoc(&records, bandwidth)?,
        bandwidth,
        tau_at_accuracy: targets
            .iter()
            .map(|&target| TauAtAccuracy {
                target,
                tau: curve.tau_at_accuracy(target),
            })
            .collect(),
        calibration: CalibrationReport::compute(preds, bins)?,
    })
}
