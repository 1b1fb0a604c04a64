mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cockit::coc::{empirical_curve, TOY_CONFIDENCES};
use cockit::evaluation::evaluate_predictions;
use cockit::ood::{energy_score, maxlogit_score, msp_score, odin_t_score};
use cockit::predictions::{load_predictions, PredictionSet};
use common::*;
use serde_json::Value;

fn cockit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cockit"))
        .args(args)
        .current_dir(dir)
        .env_remove("COCKIT_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/report.schema.json");
    let schema: Value = serde_json::from_slice(&read(&path)).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

fn assert_valid(report: &Value) {
    let validator = schema();
    let errors: Vec<String> = validator.iter_errors(report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rng(21);
        random_logit_set(&mut r, 120, 3).save_jsonl(&dir.path().join("id.jsonl"), true).unwrap();
        random_logit_set(&mut r, 80, 3).save_jsonl(&dir.path().join("ood.jsonl"), true).unwrap();
        random_logit_set(&mut r, 90, 3).save_jsonl(&dir.path().join("val.jsonl"), true).unwrap();
        random_logit_set(&mut r, 50, 3).save_jsonl(&dir.path().join("probs.jsonl"), false).unwrap();
        random_logit_set(&mut r, 40, 5).save_jsonl(&dir.path().join("k5.jsonl"), true).unwrap();
        Self { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn report_validates_against_schema() {
    let fx = Fixture::new();
    let out = cockit(
        fx.path(),
        &["report", "id.jsonl", "--temperature-scale", "--val-input", "val.jsonl", "--ood-input", "ood.jsonl"],
    );
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_valid(&report);
    assert!(report["temperature"]["temperature"].as_f64().unwrap() > 0.0);
    assert!(report["calibration"]["post"].is_object());
    assert_eq!(report["ood"]["auroc"].as_array().unwrap().len(), 4);

    let plain = json(&cockit(fx.path(), &["report", "probs.jsonl", "--bins", "60"]));
    assert_valid(&plain);
    assert!(plain["calibration"]["pre"]["ece_em"].is_null());
    assert!(plain["calibration"]["post"].is_null());
}

#[test]
fn several_inputs_keep_order_with_jobs() {
    let fx = Fixture::new();
    let seq = cockit(fx.path(), &["report", "id.jsonl", "val.jsonl", "probs.jsonl"]);
    let par = cockit(fx.path(), &["report", "id.jsonl", "val.jsonl", "probs.jsonl", "--jobs", "3"]);
    assert_eq!(seq.stdout, par.stdout);
    let reports = json(&seq);
    let paths: Vec<&str> = reports
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            assert_valid(r);
            r["input"]["path"].as_str().unwrap()
        })
        .collect();
    assert_eq!(paths, ["id.jsonl", "val.jsonl", "probs.jsonl"]);
}

#[test]
fn toy_file_tau_matches_curve_query() {
    let fx = Fixture::new();
    let correct = [false, true, false, true, true];
    let rows: Vec<Vec<f64>> = TOY_CONFIDENCES.iter().map(|&r| vec![r, 1.0 - r]).collect();
    let labels: Vec<usize> = correct.iter().map(|&c| if c { 0 } else { 1 }).collect();
    let preds = PredictionSet::from_probs(rows, labels).unwrap();
    preds.save_jsonl(&fx.file("toy.jsonl"), false).unwrap();
    let out = cockit(fx.path(), &["report", "toy.jsonl", "--acc-targets", "0.9", "--curve-out", "curve.csv"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_valid(&report);
    let expected = empirical_curve(&preds.records()).unwrap().tau_at_accuracy(0.9).unwrap();
    let got = report["tau_at_accuracy"][0]["tau"].as_f64().unwrap();
    assert_eq!(got, expected);
    let csv = String::from_utf8(read(&fx.file("curve.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
}

#[test]
fn exported_predictions_report_equals_evaluate() {
    use cockit::trainer::{run_seed, SyntheticSpec, TrainConfig};
    let fx = Fixture::new();
    let config = TrainConfig {
        epochs: 3,
        data: SyntheticSpec {
            samples_per_class: 80,
            ..SyntheticSpec::default()
        },
        ..TrainConfig::default()
    };
    let run = run_seed(&config, 2).unwrap();
    let path = fx.file("test.jsonl");
    run.test_predictions.save_jsonl(&path, true).unwrap();
    let report = json(&cockit(fx.path(), &["report", "test.jsonl"]));
    let from_cli: cockit::evaluation::Evaluation = {
        let loaded = load_predictions(&path, None, false).unwrap();
        evaluate_predictions(&loaded.set, 15, &[0.9, 0.95]).unwrap()
    };
    assert_eq!(from_cli, run.test);
    for key in ["accuracy", "aucoc_empirical", "aucoc_kde", "bandwidth"] {
        let expected = serde_json::to_value(&run.test).unwrap()[key].clone();
        assert_eq!(report[key], expected, "{key}");
    }
    let pre = &report["calibration"]["pre"];
    assert_eq!(pre["ece_ew"].as_f64().unwrap(), run.test.calibration.ece_ew);
    assert_eq!(pre["nll"].as_f64().unwrap(), run.test.calibration.nll);
    assert_eq!(report["tau_at_accuracy"], serde_json::to_value(&run.test.tau_at_accuracy).unwrap());
}

#[test]
fn exit_codes() {
    let fx = Fixture::new();
    // --logits on a probs-keyed file
    assert_eq!(cockit(fx.path(), &["report", "probs.jsonl", "--logits"]).status.code(), Some(2));
    // temperature scaling without validation file
    assert_eq!(cockit(fx.path(), &["report", "id.jsonl", "--temperature-scale"]).status.code(), Some(2));
    // logit-only score on probabilities
    assert_eq!(
        cockit(fx.path(), &["ood", "probs.jsonl", "probs.jsonl", "--score", "energy"]).status.code(),
        Some(2)
    );
    assert_eq!(cockit(fx.path(), &["report", "missing.jsonl"]).status.code(), Some(1));
    std::fs::write(fx.file("broken.jsonl"), "{\"label\": 0, \"probs\": [0.5, 0.5]}\n{\"label\": 1}\n").unwrap();
    let out = cockit(fx.path(), &["report", "broken.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"), "{}", String::from_utf8_lossy(&out.stderr));
    // mismatched K
    assert_eq!(cockit(fx.path(), &["ood", "id.jsonl", "k5.jsonl"]).status.code(), Some(1));
    assert_eq!(cockit(fx.path(), &["report"]).status.code(), Some(2));
    assert_eq!(cockit(fx.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bad_config_reports_the_field() {
    let fx = Fixture::new();
    std::fs::write(fx.file("bad.toml"), "epochs = 2\nlearning_rat = 0.1\n").unwrap();
    let out = cockit(fx.path(), &["train-demo", "--config", "bad.toml", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
    std::fs::write(fx.file("bad2.toml"), "[data]\nnum_classes = 2\n").unwrap();
    let out = cockit(fx.path(), &["train-demo", "--config", "bad2.toml", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("num_classes"));
}

#[test]
fn zero_weight_run_matches_baseline_history() {
    let fx = Fixture::new();
    std::fs::write(fx.file("zero.toml"), "epochs = 3\naucoc_weight = 0.0\n[data]\nsamples_per_class = 60\n").unwrap();
    std::fs::write(fx.file("one.toml"), "epochs = 3\n[data]\nsamples_per_class = 60\n").unwrap();
    let a = cockit(fx.path(), &["train-demo", "--config", "zero.toml", "--out-dir", "a"]);
    let b = cockit(fx.path(), &["train-demo", "--config", "one.toml", "--out-dir", "b", "--compare"]);
    assert_eq!(a.status.code(), Some(0));
    assert!(matches!(b.status.code(), Some(0) | Some(3)));
    for file in ["history.csv", "test_predictions.jsonl"] {
        assert_eq!(read(&fx.file(&format!("a/run/seed-0/{file}"))), read(&fx.file(&format!("b/baseline/seed-0/{file}"))));
    }
    let history = String::from_utf8(read(&fx.file("a/run/seed-0/history.csv"))).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_accuracy,val_aucoc,val_ece"));
    assert_eq!(history.lines().count(), 4);
    let preds = load_predictions(&fx.file("a/run/seed-0/test_predictions.jsonl"), None, true).unwrap();
    assert!(preds.set.has_logits());
}

#[test]
fn seed_flag_env_and_config_precedence() {
    let fx = Fixture::new();
    let base = ["grad-check", "--seeds", "1", "--n", "8"];
    let default = json(&cockit(fx.path(), &base));
    assert_eq!(default["seed"], 0);
    let flagged = json(&cockit(fx.path(), &[&["--seed", "5"], &base[..]].concat()));
    assert_eq!(flagged["seed"], 5);
    let env = Command::new(env!("CARGO_BIN_EXE_cockit"))
        .args(base)
        .current_dir(fx.path())
        .env("COCKIT_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(env.stdout, cockit(fx.path(), &[&["--seed", "5"], &base[..]].concat()).stdout);
}

#[test]
fn grad_check_edge_cases() {
    let fx = Fixture::new();
    let out = cockit(fx.path(), &["grad-check", "--n", "2", "--seeds", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let out = cockit(fx.path(), &["grad-check", "--seeds", "2", "--near-tie"]);
    assert_eq!(out.status.code(), Some(0));
    let summary = json(&out);
    assert!(summary["worst_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(summary["batches"].as_array().unwrap().len(), 3);
    assert_eq!(cockit(fx.path(), &["grad-check", "--n", "1"]).status.code(), Some(2));
}

#[test]
fn ood_identical_files_give_one_half() {
    let fx = Fixture::new();
    let out = json(&cockit(fx.path(), &["ood", "id.jsonl", "id.jsonl", "--T", "2"]));
    for entry in out["auroc"].as_array().unwrap() {
        assert_eq!(entry["auroc"].as_f64().unwrap(), 0.5, "{entry}");
    }
}

#[test]
fn ood_separable_and_random_pairs() {
    let fx = Fixture::new();
    // confident in-distribution rows, flat out-of-distribution rows
    let id = PredictionSet::from_logits((0..20).map(|i| vec![8.0 + i as f64 * 0.1, 0.0, 0.0]).collect(), vec![0; 20]).unwrap();
    let ood = PredictionSet::from_logits((0..20).map(|i| vec![0.01 * i as f64, 0.0, 0.0]).collect(), vec![1; 20]).unwrap();
    id.save_jsonl(&fx.file("sep_id.jsonl"), true).unwrap();
    ood.save_jsonl(&fx.file("sep_ood.jsonl"), true).unwrap();
    let out = json(&cockit(fx.path(), &["ood", "sep_id.jsonl", "sep_ood.jsonl"]));
    for entry in out["auroc"].as_array().unwrap() {
        assert_eq!(entry["auroc"].as_f64().unwrap(), 1.0, "{entry}");
    }

    let t = 1.7;
    let out = json(&cockit(fx.path(), &["ood", "id.jsonl", "ood.jsonl", "--T", "1.7", "--score", "msp", "--score", "maxlogit", "--score", "energy", "--score", "odin_t"]));
    let a = load_predictions(&fx.file("id.jsonl"), None, true).unwrap().set;
    let b = load_predictions(&fx.file("ood.jsonl"), None, true).unwrap().set;
    let scores = |set: &PredictionSet, kind: &str| -> Vec<f64> {
        (0..set.len())
            .map(|i| {
                let z = set.logits(i).unwrap();
                match kind {
                    "msp" => msp_score(set.probs(i)),
                    "maxlogit" => maxlogit_score(z),
                    "energy" => energy_score(z, t),
                    _ => odin_t_score(z, t),
                }
            })
            .collect()
    };
    for entry in out["auroc"].as_array().unwrap() {
        let kind = entry["score"].as_str().unwrap();
        let expected = oracle_auroc(&scores(&a, kind), &scores(&b, kind));
        assert!((entry["auroc"].as_f64().unwrap() - expected).abs() < 1e-12, "{kind}");
    }
}

#[test]
fn toy_and_pretty_outputs() {
    let fx = Fixture::new();
    let out = cockit(fx.path(), &["toy"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 3);
    let pretty = cockit(fx.path(), &["--pretty", "report", "id.jsonl", "--ood-input", "ood.jsonl"]);
    let text = String::from_utf8(pretty.stdout).unwrap();
    assert!(text.contains("AUCOC (empirical)"));
    assert!(text.contains("AUROC energy"));
}
