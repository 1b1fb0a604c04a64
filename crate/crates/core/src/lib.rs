//! Evaluation and training utilities for classifiers that delegate
//! low-confidence decisions to a human expert.
//!
//! The central object is the confidence operating characteristic (COC)
//! curve: for a sliding confidence threshold it pairs the fraction of
//! samples handed to the expert with the accuracy on the samples the model
//! keeps. The area under it (AUCOC) is available both empirically and in a
//! kernel-smoothed, differentiable form whose gradients are computed in
//! closed form (see [`loss`]).

pub mod calibration;
pub mod cli;
pub mod coc;
pub mod error;
pub mod evaluation;
pub mod kde;
pub mod loss;
pub mod ood;
pub mod predictions;
pub mod trainer;

pub use calibration::{CalibrationReport, CalibrationResult};
pub use coc::{CocCurve, CocPoint, CurveKind};
pub use error::{Error, Result};
pub use kde::GaussianKernelModel;
pub use loss::{LossBatch, LossGradients};
pub use ood::{ScoreKind, ScoredPopulations};
pub use predictions::{ConfidenceRecord, PredictionSet};
