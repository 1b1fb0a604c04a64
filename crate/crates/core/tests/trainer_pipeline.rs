mod common;

use cockit::kde::normal_pdf;
use cockit::loss::{fixed_tau_area_oracle, LossBatch, Perturbation};
use cockit::predictions::argmax;
use cockit::trainer::mlp::Mlp;
use cockit::trainer::objective::primary_loss_and_grad;
use cockit::trainer::{batch_objective, generate_blobs, PrimaryLoss, SyntheticSpec, TrainConfig};
use common::rng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Objective at `model` with the AUCOC term evaluated through the fixed-tau
/// oracle around the reference batch built at `reference`.
fn oracle_objective(
    model: &Mlp,
    reference: &Mlp,
    xs: &[[f64; 2]],
    ys: &[usize],
    config: &TrainConfig,
    route_true_prob: bool,
) -> f64 {
    let probs_ref: Vec<Vec<f64>> = xs.iter().map(|x| softmax(&reference.logits(x))).collect();
    let predicted: Vec<usize> = probs_ref.iter().map(|p| argmax(p)).collect();
    let batch = LossBatch::new(
        probs_ref.iter().zip(&predicted).map(|(p, &k)| p[k]).collect(),
        probs_ref.iter().zip(ys).map(|(p, &y)| p[y]).collect(),
    )
    .unwrap();
    let probs: Vec<Vec<f64>> = xs.iter().map(|x| softmax(&model.logits(x))).collect();
    let primary: f64 = probs
        .iter()
        .zip(ys)
        .map(|(p, &y)| primary_loss_and_grad(config.primary_loss, config.gamma, p, y).0)
        .sum::<f64>()
        / ys.len() as f64;
    let perturbation = Perturbation {
        d_confidence: (0..ys.len()).map(|n| probs[n][predicted[n]] - batch.confidence()[n]).collect(),
        d_true_prob: (0..ys.len())
            .map(|n| if route_true_prob { probs[n][ys[n]] - batch.true_prob()[n] } else { 0.0 })
            .collect(),
    };
    let area = fixed_tau_area_oracle(&batch, &perturbation).unwrap();
    primary + config.aucoc_weight * -area.ln()
}

fn check_pipeline(config: &TrainConfig, seed: u64) {
    let splits = generate_blobs(&config.data).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let model = Mlp::new(config.hidden, 4, &mut r);
    let xs = &splits.train.features[..48];
    let ys = &splits.train.labels[..48];
    let analytic = batch_objective(&model, xs, ys, config).unwrap();
    assert!(analytic.aucoc.is_some());
    let step = 1e-6;
    for _ in 0..10 {
        let i = r.random_range(0..model.params.len());
        let mut up = model.clone();
        up.params[i] += step;
        let mut down = model.clone();
        down.params[i] -= step;
        let route = config.true_prob_gradient;
        let fd = (oracle_objective(&up, &model, xs, ys, config, route)
            - oracle_objective(&down, &model, xs, ys, config, route))
            / (2.0 * step);
        let g = analytic.grad[i];
        let rel = (g - fd).abs() / fd.abs().max(1e-6);
        assert!(rel < 1e-3, "param {i}: analytic {g} vs fd {fd}");
    }
}

#[test]
fn full_pipeline_gradient_matches_oracle_differences() {
    let config = TrainConfig {
        data: SyntheticSpec {
            samples_per_class: 40,
            ..SyntheticSpec::default()
        },
        ..TrainConfig::default()
    };
    for seed in 0..3 {
        check_pipeline(&config, seed);
    }
    let focal = TrainConfig {
        primary_loss: PrimaryLoss::Focal,
        aucoc_weight: 4.0,
        ..config.clone()
    };
    check_pipeline(&focal, 7);
    let argmax_only = TrainConfig {
        true_prob_gradient: false,
        ..config
    };
    check_pipeline(&argmax_only, 8);
}

/// Monte Carlo accuracy of the maximum-posterior rule on the known mixture,
/// with class densities evaluated directly.
fn bayes_accuracy(spec: &SyntheticSpec, draws: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let centers = spec.centers();
    let noise = Normal::new(0.0, spec.scale).unwrap();
    let density = |x: [f64; 2], c: [f64; 2]| normal_pdf((x[0] - c[0]) / spec.scale) * normal_pdf((x[1] - c[1]) / spec.scale);
    let mut hits = 0usize;
    for _ in 0..draws {
        let y = r.random_range(0..spec.num_classes);
        let x = [centers[y][0] + noise.sample(&mut r), centers[y][1] + noise.sample(&mut r)];
        let best = (0..spec.num_classes)
            .max_by(|&a, &b| density(x, centers[a]).total_cmp(&density(x, centers[b])))
            .unwrap();
        hits += usize::from(best == y);
    }
    hits as f64 / draws as f64
}

#[test]
fn default_spec_has_moderate_bayes_accuracy() {
    let acc = bayes_accuracy(&SyntheticSpec::default(), 200_000, 1);
    assert!(acc > 0.7 && acc < 0.95, "{acc}");
    // four centers on a circle of radius 2, unit noise: Φ(√2)² per quadrant
    let closed_form = (0.5 * libm::erfc(-1.0)).powi(2);
    assert!((acc - closed_form).abs() < 0.005, "{acc} vs {closed_form}");
}
