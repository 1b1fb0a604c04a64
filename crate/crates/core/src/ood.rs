//! Out-of-distribution scores and rank-based AUROC.
//!
//! Higher scores mean "more in-distribution"; in-distribution samples are
//! the positive class.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::predictions::{softmax_unchecked, PredictionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Maximum softmax probability.
    Msp,
    /// Largest raw logit.
    Maxlogit,
    /// Negative free energy, `T · logsumexp(z / T)`.
    Energy,
    /// Maximum softmax probability of `z / T`. ODIN without the input
    /// perturbation step.
    #[value(name = "odin_t")]
    OdinT,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [ScoreKind::Msp, ScoreKind::Maxlogit, ScoreKind::Energy, ScoreKind::OdinT];

    pub fn needs_logits(self) -> bool {
        !matches!(self, ScoreKind::Msp)
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Msp => "msp",
            ScoreKind::Maxlogit => "maxlogit",
            ScoreKind::Energy => "energy",
            ScoreKind::OdinT => "odin_t",
        }
    }
}

/// In- and out-of-distribution scores under one scoring rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPopulations {
    pub scores_id: Vec<f64>,
    pub scores_ood: Vec<f64>,
    pub kind: ScoreKind,
}

impl ScoredPopulations {
    pub fn new(scores_id: Vec<f64>, scores_ood: Vec<f64>, kind: ScoreKind) -> Result<Self> {
        if scores_id.is_empty() || scores_ood.is_empty() {
            return Err(Error::invalid("both populations must be non-empty"));
        }
        if scores_id.iter().chain(&scores_ood).any(|s| !s.is_finite()) {
            return Err(Error::invalid("scores must be finite"));
        }
        Ok(Self {
            scores_id,
            scores_ood,
            kind,
        })
    }

    pub fn auroc(&self) -> f64 {
        auroc(&self.scores_id, &self.scores_ood)
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn msp_score(probs: &[f64]) -> f64 {
    max_of(probs)
}

pub fn maxlogit_score(logits: &[f64]) -> f64 {
    max_of(logits)
}

pub fn energy_score(logits: &[f64], temperature: f64) -> f64 {
    let m = max_of(logits);
    let sum: f64 = logits.iter().map(|z| ((z - m) / temperature).exp()).sum();
    m + temperature * sum.ln()
}

pub fn odin_t_score(logits: &[f64], temperature: f64) -> f64 {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    max_of(&softmax_unchecked(&scaled))
}

/// Score every sample of a set.
pub fn score_set(preds: &PredictionSet, kind: ScoreKind, temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    if kind.needs_logits() && !preds.has_logits() {
        return Err(Error::FormatConflict(format!(
            "score `{}` needs logits but the input holds probabilities only",
            kind.name()
        )));
    }
    Ok((0..preds.len())
        .map(|i| match kind {
            ScoreKind::Msp => msp_score(preds.probs(i)),
            ScoreKind::Maxlogit => maxlogit_score(preds.logits(i).unwrap()),
            ScoreKind::Energy => energy_score(preds.logits(i).unwrap(), temperature),
            ScoreKind::OdinT => odin_t_score(preds.logits(i).unwrap(), temperature),
        })
        .collect())
}

/// `P(id > ood) + ½ P(id = ood)` via mid-ranks of the pooled sample.
pub fn auroc(scores_id: &[f64], scores_ood: &[f64]) -> f64 {
    let (m, n) = (scores_id.len(), scores_ood.len());
    let mut pooled: Vec<(f64, bool)> = scores_id
        .iter()
        .map(|&s| (s, true))
        .chain(scores_ood.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the rank sum of the positives, kept integral
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the mid-rank (i + j + 2) / 2
        let positives = pooled[i..=j].iter().filter(|p| p.1).count() as u128;
        twice_rank_sum += positives * (i + j + 2) as u128;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - (m as u128) * (m as u128 + 1);
    twice_u as f64 / (2 * m * n) as f64
}
