//! Minibatch gradient descent on `primary + λ · AUCOC loss`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{generate_blobs, Dataset, Splits, SyntheticSpec, DIMENSION};
use super::mlp::Mlp;
use super::objective::{primary_loss_and_grad, PrimaryLoss};
use crate::calibration::{ece_equal_mass, DEFAULT_BINS};
use crate::coc::{empirical_aucoc, empirical_curve};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_predictions, Evaluation};
use crate::loss::{aucoc_loss_and_grad, LossBatch};
use crate::predictions::{argmax, softmax_unchecked, PredictionSet};

/// Accuracy targets reported for `tau` at evaluation time.
pub const DEFAULT_TARGETS: [f64; 2] = [0.9, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub primary_loss: PrimaryLoss,
    /// Focal exponent; ignored for cross-entropy.
    pub gamma: f64,
    /// `λ`; zero skips the AUCOC term entirely.
    pub aucoc_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub seed: u64,
    /// Route AUCOC gradients through the true-class probability as well as
    /// the confidence. Off leaves only the argmax path (ablation).
    pub true_prob_gradient: bool,
    pub data: SyntheticSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            primary_loss: PrimaryLoss::CrossEntropy,
            gamma: 3.0,
            aucoc_weight: 1.0,
            epochs: 40,
            batch_size: 64,
            learning_rate: 0.1,
            hidden: 32,
            seed: 0,
            true_prob_gradient: true,
            data: SyntheticSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.aucoc_weight >= 0.0 && self.aucoc_weight.is_finite()) {
            return fail(format!("aucoc_weight must be >= 0, got {}", self.aucoc_weight));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.hidden == 0 {
            return fail("hidden must be >= 1".into());
        }
        self.data.validate()
    }

    /// Same configuration with both the data and training seeds replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.data.seed = seed;
        c
    }
}

/// Value and parameter gradient of the objective on one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchObjective {
    pub loss: f64,
    pub primary: f64,
    /// `None` when the AUCOC term was not evaluated (`λ = 0` or batch of 1).
    pub aucoc: Option<f64>,
    pub grad: Vec<f64>,
}

pub fn batch_objective(
    model: &Mlp,
    features: &[[f64; DIMENSION]],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<BatchObjective> {
    let b = labels.len();
    let inv_b = 1.0 / b as f64;
    let caches: Vec<_> = features.iter().map(|x| model.forward(x)).collect();
    let probs: Vec<Vec<f64>> = caches.iter().map(|c| softmax_unchecked(&c.logits)).collect();
    let mut d_logits = Vec::with_capacity(b);
    let mut primary = 0.0;
    for (p, &y) in probs.iter().zip(labels) {
        let (l, mut g) = primary_loss_and_grad(config.primary_loss, config.gamma, p, y);
        primary += l;
        g.iter_mut().for_each(|v| *v *= inv_b);
        d_logits.push(g);
    }
    primary *= inv_b;

    let mut aucoc = None;
    let lambda = config.aucoc_weight;
    if lambda > 0.0 && b >= 2 {
        let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let batch = LossBatch::new(
            probs.iter().zip(&predicted).map(|(p, &k)| p[k]).collect(),
            probs.iter().zip(labels).map(|(p, &y)| p[y]).collect(),
        )?;
        let eval = aucoc_loss_and_grad(&batch)?;
        for n in 0..b {
            let p = &probs[n];
            // chain through softmax: ∂p_j/∂z_i = p_j (δ_ij - p_i)
            let mut route = |class: usize, d: f64| {
                let scale = lambda * d * p[class];
                for (i, dz) in d_logits[n].iter_mut().enumerate() {
                    *dz += scale * (if i == class { 1.0 } else { 0.0 } - p[i]);
                }
            };
            route(predicted[n], eval.grads.d_confidence[n]);
            if config.true_prob_gradient {
                route(labels[n], eval.grads.d_true_prob[n]);
            }
        }
        aucoc = Some(eval.loss);
    }

    let mut grad = vec![0.0; model.params.len()];
    for (cache, dz) in caches.iter().zip(&d_logits) {
        model.backward(cache, dz, &mut grad);
    }
    Ok(BatchObjective {
        loss: primary + aucoc.map_or(0.0, |a| lambda * a),
        primary,
        aucoc,
        grad,
    })
}

/// Validation metrics after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_aucoc: f64,
    pub val_ece: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Checkpoint with the highest validation AUCOC.
    pub model: Mlp,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

pub fn train(config: &TrainConfig, splits: &Splits) -> Result<TrainOutcome> {
    config.validate()?;
    let train_set = &splits.train;
    if train_set.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Mlp::new(config.hidden, train_set.num_classes, &mut rng);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Mlp)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let xs: Vec<_> = chunk.iter().map(|&i| train_set.features[i]).collect();
            let ys: Vec<_> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let step = batch_objective(&model, &xs, &ys, config).map_err(|e| Error::NonFiniteLoss {
                epoch,
                batch: bi,
                lambda: config.aucoc_weight,
                detail: format!("batch of {}: {e}", ys.len()),
            })?;
            if !step.loss.is_finite() || step.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    lambda: config.aucoc_weight,
                    detail: format!(
                        "batch of {}: primary = {}, aucoc = {:?}",
                        ys.len(),
                        step.primary,
                        step.aucoc
                    ),
                });
            }
            for (p, g) in model.params.iter_mut().zip(&step.grad) {
                *p -= config.learning_rate * g;
            }
            loss_sum += step.loss;
            batches += 1;
        }

        let val = predict(&model, &splits.val)?;
        let records = val.records();
        let val_aucoc = empirical_aucoc(&empirical_curve(&records)?);
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_accuracy: val.accuracy(),
            val_aucoc,
            val_ece: ece_equal_mass(&records, DEFAULT_BINS.min(records.len()))?,
        });
        if best.as_ref().is_none_or(|(score, _, _)| val_aucoc > *score) {
            best = Some((val_aucoc, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}

/// Model outputs on a dataset, logits retained.
pub fn predict(model: &Mlp, data: &Dataset) -> Result<PredictionSet> {
    let rows = data.features.iter().map(|x| model.logits(x)).collect();
    PredictionSet::from_logits(rows, data.labels.clone())
}

pub fn evaluate(model: &Mlp, data: &Dataset) -> Result<Evaluation> {
    evaluate_predictions(&predict(model, data)?, DEFAULT_BINS, &DEFAULT_TARGETS)
}

pub fn write_history_csv<W: Write>(history: &[EpochRecord], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in history {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io("<history>", e))
}

/// Everything produced by one seeded run.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: TrainOutcome,
    pub test_predictions: PredictionSet,
    pub test: Evaluation,
}

pub fn run_seed(config: &TrainConfig, seed: u64) -> Result<SeedRun> {
    let config = config.with_seed(seed);
    let splits = generate_blobs(&config.data)?;
    let outcome = train(&config, &splits)?;
    let test_predictions = predict(&outcome.model, &splits.test)?;
    let test = evaluate_predictions(&test_predictions, DEFAULT_BINS, &DEFAULT_TARGETS)?;
    Ok(SeedRun {
        seed,
        outcome,
        test_predictions,
        test,
    })
}

/// Largest allowed drop in mean test AUCOC against the `λ = 0` baseline.
pub const AUCOC_MARGIN: f64 = 0.005;
/// Largest allowed mean test-accuracy difference against the baseline.
pub const ACCURACY_MARGIN: f64 = 0.02;

/// Mean test metrics of the configured run and its `λ = 0` twin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub baseline_aucoc: Vec<f64>,
    pub baseline_accuracy: Vec<f64>,
    pub aucoc: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub mean_baseline_aucoc: f64,
    pub mean_baseline_accuracy: f64,
    pub mean_aucoc: f64,
    pub mean_accuracy: f64,
}

impl Comparison {
    pub fn aucoc_holds(&self) -> bool {
        self.mean_aucoc >= self.mean_baseline_aucoc - AUCOC_MARGIN
    }

    pub fn accuracy_holds(&self) -> bool {
        (self.mean_accuracy - self.mean_baseline_accuracy).abs() <= ACCURACY_MARGIN
    }

    pub fn holds(&self) -> bool {
        self.aucoc_holds() && self.accuracy_holds()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs both arms for every seed. `on_run` sees each finished run
/// (`true` for the `λ = 0` arm) so callers can write artifacts.
pub fn compare(
    config: &TrainConfig,
    seeds: &[u64],
    mut on_run: impl FnMut(bool, &SeedRun) -> Result<()>,
) -> Result<Comparison> {
    let baseline_config = TrainConfig {
        aucoc_weight: 0.0,
        ..config.clone()
    };
    let mut c = Comparison {
        seeds: seeds.to_vec(),
        baseline_aucoc: Vec::new(),
        baseline_accuracy: Vec::new(),
        aucoc: Vec::new(),
        accuracy: Vec::new(),
        mean_baseline_aucoc: 0.0,
        mean_baseline_accuracy: 0.0,
        mean_aucoc: 0.0,
        mean_accuracy: 0.0,
    };
    for &seed in seeds {
        let base = run_seed(&baseline_config, seed)?;
        on_run(true, &base)?;
        c.baseline_aucoc.push(base.test.aucoc_empirical);
        c.baseline_accuracy.push(base.test.accuracy);
        let run = run_seed(config, seed)?;
        on_run(false, &run)?;
        c.aucoc.push(run.test.aucoc_empirical);
        c.accuracy.push(run.test.accuracy);
    }
    c.mean_baseline_aucoc = mean(&c.baseline_aucoc);
    c.mean_baseline_accuracy = mean(&c.baseline_accuracy);
    c.mean_aucoc = mean(&c.aucoc);
    c.mean_accuracy = mean(&c.accuracy);
    Ok(c)
}
