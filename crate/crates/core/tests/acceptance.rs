//! Acceptance suite. Each criterion runs in isolation and reports one
//! `[PASS]`/`[FAIL]` line with its wall time; the test fails if any does.
//!
//! Run with `cargo test -p polyview --test acceptance -- --nocapture`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use candle_core::{Device, Tensor};
use polyview::cli::{cmd_aggregate, cmd_cv, cmd_train};
use polyview::dataset::synthetic::{color_fixture_examples, write_color_fixture};
use polyview::dataset::{make_folds, make_split, ImageRecord};
use polyview::eval::{
    accuracy, average_rows, confusion_matrix, mae, mse, polarization_index, precision_recall_f1, weighted_f1,
    FoldOutcome,
};
use polyview::labels::{bin_aes, category_counts, import_labels, Category, Group, Variable};
use polyview::model::{
    build_model, softmax, softmax_rows, BackboneFamily, FreezeVersion, HeadId, ModelConfig, Owner, Task,
};
use polyview::train::{stopping_epoch, train, Predictor, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{changed, oracle, param_bits, tiny_model_toml, write_run_config};

const FIXTURE_CSV: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/survey_816.csv");

const CATEGORY_TABLE: &str = "          Sentiment               Subject of Harm
            Democrats Republicans   Democrats Republicans
Negative           32         212          20          77
Neutral           701         547         493         630
Positive           83          57         303         109
";

fn ok(cond: bool, msg: impl FnOnce() -> String) {
    if !cond {
        panic!("{}", msg());
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) {
    ok((a - b).abs() <= tol, || format!("{what}: {a} vs {b} (tol {tol:e})"));
}

// 1
fn category_fixture_exact() {
    let dir = tempfile::tempdir().unwrap();
    let expected: [(Variable, Group, [usize; 3]); 4] = [
        (Variable::Sentiment, Group::Dem, [32, 701, 83]),
        (Variable::Sentiment, Group::Rep, [212, 547, 57]),
        (Variable::SubjectOfHarm, Group::Dem, [20, 493, 303]),
        (Variable::SubjectOfHarm, Group::Rep, [77, 630, 109]),
    ];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let first = cmd_aggregate(Path::new(FIXTURE_CSV), &a.join("labels.json"), None).unwrap();
    ok(first.n_images == 816, || format!("{} images", first.n_images));
    ok(first.rejected_rows == 0, || format!("{} rejected rows", first.rejected_rows));
    ok(first.category_table == CATEGORY_TABLE, || {
        format!("category table differs:\n{}", first.category_table)
    });
    let sets = import_labels(a.join("labels.json")).unwrap();
    for (variable, group, counts) in expected {
        let got = category_counts(&sets, variable, group);
        ok(got == counts, || format!("{variable:?}/{group:?}: {got:?} != {counts:?}"));
    }
    cmd_aggregate(Path::new(FIXTURE_CSV), &b.join("labels.json"), None).unwrap();
    for out in &first.outputs {
        let name = out.file_name().unwrap();
        ok(fs::read(out).unwrap() == fs::read(b.join(name)).unwrap(), || {
            format!("{name:?} differs between runs")
        });
    }
    let again = cmd_aggregate(Path::new(FIXTURE_CSV), &a.join("labels.json"), None).unwrap();
    ok(again.outputs == first.outputs, || "output list changed".into());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    ok(manifest["reproducible"] == serde_json::json!(true), || {
        format!("manifest reproducible = {}", manifest["reproducible"])
    });
}

// 2
fn binning_sweep() {
    for k in 100..=700u32 {
        let aes = k as f64 / 100.0;
        let expected = if k <= 300 {
            Category::Negative
        } else if k >= 500 {
            Category::Positive
        } else {
            Category::Neutral
        };
        let got = bin_aes(aes).unwrap();
        ok(got == expected, || format!("bin_aes({aes}) = {got:?}, expected {expected:?}"));
    }
    ok(bin_aes(3.0).unwrap() == Category::Negative, || "bin_aes(3)".into());
    ok(bin_aes(5.0).unwrap() == Category::Positive, || "bin_aes(5)".into());
    for bad in [0.99, 7.01, f64::NAN, f64::INFINITY, -1.0] {
        ok(bin_aes(bad).is_err(), || format!("bin_aes({bad}) accepted"));
    }
}

// 3
fn metric_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for instance in 0..1000 {
        let n = rng.gen_range(1..=50);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..=7.0)).collect();
        let y_hat: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..=7.0)).collect();
        let truth: Vec<Category> = (0..n).map(|_| Category::ALL[rng.gen_range(0..3)]).collect();
        // Skew predictions so some classes go unpredicted.
        let pred: Vec<Category> = (0..n)
            .map(|_| Category::ALL[rng.gen_range(0..3).min(rng.gen_range(0..3) + instance % 2)])
            .collect();
        let tag = |m: &str| format!("instance {instance} {m}");
        close(mae(&y, &y_hat).unwrap(), oracle::mae(&y, &y_hat), 1e-12, &tag("mae"));
        close(mse(&y, &y_hat).unwrap(), oracle::mse(&y, &y_hat), 1e-12, &tag("mse"));
        let cm = confusion_matrix(&truth, &pred).unwrap();
        for class in Category::ALL {
            let s = precision_recall_f1(&cm, class);
            let (p, r, f) = oracle::class_scores(&truth, &pred, class);
            close(s.precision, p, 1e-12, &tag("precision"));
            close(s.recall, r, 1e-12, &tag("recall"));
            close(s.f1, f, 1e-12, &tag("f1"));
        }
        close(weighted_f1(&cm).unwrap(), oracle::weighted_f1(&truth, &pred), 1e-12, &tag("weighted f1"));
        close(accuracy(&cm).unwrap(), oracle::accuracy(&truth, &pred), 1e-12, &tag("accuracy"));
    }
}

// 4
fn softmax_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let k = rng.gen_range(2..=8);
        let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let p = softmax(&z).unwrap();
        close(p.iter().sum::<f64>(), 1.0, 1e-9, "row sum");
        let c = rng.gen_range(-500.0..500.0);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted).unwrap()) {
            close(*a, b, 1e-9, "shift invariance");
        }
    }
    for z in [vec![1000.0, 0.0, -1000.0], vec![-1000.0, -1000.0, -1000.0], vec![1000.0, 1000.0, 999.0]] {
        let p = softmax(&z).unwrap();
        ok(p.iter().all(|v| v.is_finite() && *v >= 0.0), || format!("{z:?} -> {p:?}"));
        close(p.iter().sum::<f64>(), 1.0, 1e-9, "large-logit row sum");
    }
    let logits = Tensor::new(&[[1000.0f64, 0.0, -1000.0], [3.0, 1.0, 2.0], [-1000.0, -1000.0, -999.0]], &Device::Cpu)
        .unwrap();
    let rows: Vec<Vec<f64>> = softmax_rows(&logits).unwrap().to_vec2().unwrap();
    for row in rows {
        ok(row.iter().all(|v| v.is_finite()), || format!("{row:?}"));
        close(row.iter().sum::<f64>(), 1.0, 1e-9, "tensor row sum");
    }
}

/// Trunk layer-name prefixes each strategy may retrain.
fn declared_prefixes(family: BackboneFamily, version: FreezeVersion) -> &'static [&'static str] {
    match (family, version) {
        (_, FreezeVersion::V1) => &[],
        (BackboneFamily::ResNet50V2, FreezeVersion::V2) => &["conv5_", "post_"],
        (BackboneFamily::ResNet50V2, FreezeVersion::V3) => &["conv4_", "conv5_", "post_"],
        (_, FreezeVersion::V2) => &["pool4_", "conv5_", "bn", "relu"],
        (_, FreezeVersion::V3) => &["pool3_", "conv4_", "pool4_", "conv5_", "bn", "relu"],
    }
}

// 5
fn freeze_contract() {
    let examples = color_fixture_examples(64, 5, Variable::Sentiment, BackboneFamily::ResNet50V2.preprocessing());
    let split = make_split(examples.len(), 5).unwrap();
    let tcfg = TrainingConfig {
        max_epochs: 5,
        patience: 5,
        seed: 5,
        ..TrainingConfig::default()
    };
    for family in [BackboneFamily::ResNet50V2, BackboneFamily::DenseNet169] {
        let examples = if family == BackboneFamily::ResNet50V2 {
            examples.clone()
        } else {
            color_fixture_examples(64, 5, Variable::Sentiment, family.preprocessing())
        };
        for version in [FreezeVersion::V1, FreezeVersion::V2, FreezeVersion::V3] {
            let model = build_model(&ModelConfig::tiny(family, version, Task::Classification)).unwrap();
            let before = param_bits(&model);
            let (_, state) = train(&model, &examples, &split, &tcfg).unwrap();
            ok(state.epoch == 5, || format!("{family}/{version}: ran {} epochs", state.epoch));
            let after = param_bits(&model);
            let moved = changed(&before, &after);
            let prefixes = declared_prefixes(family, version);
            let graph = model.graph();
            let mut trunk_moved = 0;
            for (name, owner) in &moved {
                if let Owner::Trunk(i) = owner {
                    let layer = &graph.layers[*i].name;
                    ok(prefixes.iter().any(|p| layer.starts_with(p)), || {
                        format!("{family}/{version}: frozen parameter {name} (layer {layer}) changed")
                    });
                    trunk_moved += 1;
                }
            }
            ok((trunk_moved > 0) == (version != FreezeVersion::V1), || {
                format!("{family}/{version}: {trunk_moved} trunk parameters changed")
            });
            for head in HeadId::BOTH {
                ok(moved.iter().any(|(_, o)| *o == Owner::Head(head)), || {
                    format!("{family}/{version}: {head:?} head did not train")
                });
            }
        }
    }
}

// 6
fn gradient_routing() {
    let family = BackboneFamily::ResNet50V2;
    let examples = color_fixture_examples(64, 6, Variable::Sentiment, family.preprocessing());
    let split = make_split(examples.len(), 6).unwrap();
    let tcfg = TrainingConfig {
        max_epochs: 1,
        patience: 1,
        batch_size: examples.len(),
        seed: 6,
        ..TrainingConfig::default()
    };
    for task in [Task::Classification, Task::Regression] {
        for (weights, active, silent) in [([1.0, 0.0], HeadId::Dem, HeadId::Rep), ([0.0, 1.0], HeadId::Rep, HeadId::Dem)] {
            let mut cfg = ModelConfig::tiny(family, FreezeVersion::V3, task);
            cfg.loss_weights = weights;
            let model = build_model(&cfg).unwrap();
            let before = param_bits(&model);
            train(&model, &examples, &split, &tcfg).unwrap();
            let moved = changed(&before, &param_bits(&model));
            ok(!moved.iter().any(|(_, o)| *o == Owner::Head(silent)), || {
                format!("{task}/{weights:?}: {silent:?} head changed")
            });
            ok(moved.iter().any(|(_, o)| *o == Owner::Head(active)), || {
                format!("{task}/{weights:?}: {active:?} head did not change")
            });
            ok(moved.iter().any(|(_, o)| matches!(o, Owner::Trunk(_))), || {
                format!("{task}/{weights:?}: shared trunk did not change")
            });
        }
    }
}

// 7
fn early_stopping_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        let patience = rng.gen_range(1..=15);
        let len = rng.gen_range(1..=60);
        // Quantised random walk so ties and plateaus occur.
        let mut level: f64 = rng.gen_range(0.5..2.0);
        let losses: Vec<f64> = (0..len)
            .map(|_| {
                level += (rng.gen_range(-3i32..=2) as f64) * 0.05;
                level = level.max(0.0);
                (level * 20.0).round() / 20.0
            })
            .collect();
        let expected = oracle::stopping_epoch(&losses, patience, 50);
        let got = stopping_epoch(&losses, patience, 50);
        ok(got == expected, || {
            format!("case {case}: patience {patience}, losses {losses:?}: got {got}, expected {expected}")
        });
    }
}

// 8
fn synthetic_training() {
    let family = BackboneFamily::ResNet50V2;
    let examples = color_fixture_examples(64, 7, Variable::Sentiment, family.preprocessing());
    let split = make_split(examples.len(), 7).unwrap();
    let val_images: Vec<ImageRecord> = split.validation.iter().map(|&i| examples[i].image.clone()).collect();

    let tcfg = TrainingConfig {
        max_epochs: 20,
        seed: 7,
        ..TrainingConfig::default()
    };
    let model = build_model(&ModelConfig::tiny(family, FreezeVersion::V1, Task::Classification)).unwrap();
    let (ck, _) = train(&model, &examples, &split, &tcfg).unwrap();
    let preds = Predictor::new(model, ck.preprocessing, ck.variable).predict(&val_images).unwrap();
    let n = preds.len() as f64;
    let acc = |head: fn(&polyview::train::PairedPrediction) -> Category, truth: fn(&polyview::dataset::LabeledExample) -> Category| {
        preds
            .iter()
            .zip(&split.validation)
            .filter(|(p, &i)| head(p) == truth(&examples[i]))
            .count() as f64
            / n
    };
    let acc_dem = acc(|p| p.dem.category, |e| e.target_dem.category);
    let acc_rep = acc(|p| p.rep.category, |e| e.target_rep.category);
    ok(acc_dem >= 0.9 && acc_rep >= 0.9, || {
        format!("classification validation accuracy dem {acc_dem:.3}, rep {acc_rep:.3}")
    });

    let model = build_model(&ModelConfig::tiny(family, FreezeVersion::V1, Task::Regression)).unwrap();
    let tcfg = TrainingConfig {
        seed: 7,
        ..TrainingConfig::default()
    };
    let (ck, _) = train(&model, &examples, &split, &tcfg).unwrap();
    let preds = Predictor::new(model, ck.preprocessing, ck.variable).predict(&val_images).unwrap();
    let mut err = [0.0f64; 2];
    for (p, &i) in preds.iter().zip(&split.validation) {
        err[0] += (p.dem.score.unwrap() - examples[i].target_dem.aes).abs();
        err[1] += (p.rep.score.unwrap() - examples[i].target_rep.aes).abs();
    }
    let (mae_dem, mae_rep) = (err[0] / n, err[1] / n);
    ok(mae_dem <= 0.5 && mae_rep <= 0.5, || {
        format!("regression validation MAE dem {mae_dem:.3}, rep {mae_rep:.3}")
    });
}

// 9
fn kfold_properties() {
    for seed in [0, 1, 42] {
        let plan = make_folds(816, 5, seed).unwrap();
        let mut sizes = plan.sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        ok(sizes == [164, 163, 163, 163, 163], || format!("fold sizes {sizes:?}"));
        let mut seen = BTreeSet::new();
        for fold in &plan.folds {
            for &i in fold {
                ok(seen.insert(i), || format!("index {i} in two folds"));
            }
        }
        ok(seen.len() == 816 && seen.iter().next_back() == Some(&815), || "folds do not cover 0..816".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let k = rng.gen_range(2..=10);
        let rows: Vec<BTreeMap<String, f64>> = (0..k)
            .map(|_| {
                ["dem_mae", "rep_mae"]
                    .iter()
                    .map(|c| (c.to_string(), rng.gen_range(0.0..6.0)))
                    .collect()
            })
            .collect();
        let avg = average_rows(&rows);
        for col in ["dem_mae", "rep_mae"] {
            let mean = rows.iter().map(|r| r[col]).sum::<f64>() / k as f64;
            close(avg[col], mean, 1e-12, col);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let (labels, images) = write_color_fixture(&dir.path().join("fixture"), 40, 9).unwrap();
    let config = write_run_config(
        dir.path(),
        &labels,
        &images,
        &dir.path().join("runs"),
        &tiny_model_toml("resnet50v2", "v1", "classification"),
        "max_epochs = 3\npatience = 3\nseed = 9",
    );
    let (report, out) = cmd_cv(&config, 5, &mut std::io::sink()).unwrap();
    ok(report.folds.len() == 5, || format!("{} folds", report.folds.len()));
    ok(out.join("cv_report.json").is_file() && out.join("cv_table.md").is_file(), || "cv outputs missing".into());
    let rows: Vec<_> = report
        .folds
        .iter()
        .map(|f| match &f.outcome {
            FoldOutcome::Completed { report, .. } => report.summary(),
            FoldOutcome::Failed { reason } => panic!("fold {} failed: {reason}", f.fold),
        })
        .collect();
    ok(report.folds.iter().map(|f| f.n_validation).sum::<usize>() == 40, || "validation folds do not cover".into());
    for (col, value) in &report.average {
        let mean = rows.iter().map(|r| r[col]).sum::<f64>() / rows.len() as f64;
        close(*value, mean, 1e-12, col);
    }
}

// 10
fn polarization_grid() {
    close(polarization_index(6.0, 2.0).unwrap(), 4.0, 0.0, "index(6,2)");
    let grid: Vec<f64> = (2..=14).map(|k| k as f64 / 2.0).collect();
    for &a in &grid {
        close(polarization_index(a, a).unwrap(), 0.0, 0.0, "index(x,x)");
        for &b in &grid {
            let ab = polarization_index(a, b).unwrap();
            let ba = polarization_index(b, a).unwrap();
            ok(ab == ba, || format!("index({a},{b}) = {ab} but index({b},{a}) = {ba}"));
            ok((0.0..=6.0).contains(&ab), || format!("index({a},{b}) = {ab} out of range"));
            close(ab, if a > b { a - b } else { b - a }, 0.0, "index value");
        }
    }
    for (a, b) in [(0.5, 4.0), (4.0, 7.5), (f64::NAN, 4.0)] {
        ok(polarization_index(a, b).is_err(), || format!("index({a},{b}) accepted"));
    }
}

// 11
fn determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (labels, images) = write_color_fixture(&dir.path().join("fixture"), 64, 11).unwrap();
    let model = tiny_model_toml("resnet50v2", "v3", "classification");
    let training = "max_epochs = 3\npatience = 3\nseed = 11";
    let run = |name: &str| {
        let config = write_run_config(&dir.path().join(name), &labels, &images, &dir.path().join(name).join("runs"), &model, training);
        let summary = cmd_train(&config, &mut std::io::sink()).unwrap();
        let log = fs::read(summary.run_path.join("epochs.log")).unwrap();
        let preds = fs::read(summary.run_path.join("validation_predictions.json")).unwrap();
        (summary, log, preds)
    };
    let (a, log_a, preds_a) = run("a");
    let (b, log_b, preds_b) = run("b");
    ok(a.epoch_log.lines().count() == 3, || format!("epoch log:\n{}", a.epoch_log));
    ok(log_a == log_b, || format!("epoch logs differ:\n{}\n---\n{}", a.epoch_log, b.epoch_log));
    ok(preds_a == preds_b, || "validation predictions differ".into());
    ok(a.validation_predictions == b.validation_predictions, || "in-memory predictions differ".into());
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn(),
}

#[test]
fn acceptance() {
    let criteria = [
        Criterion { id: 1, name: "category table fixture is exact", budget: Duration::from_secs(10), run: category_fixture_exact },
        Criterion { id: 2, name: "binning boundary sweep", budget: Duration::from_secs(1), run: binning_sweep },
        Criterion { id: 3, name: "metrics match brute-force oracle", budget: Duration::from_secs(30), run: metric_oracle },
        Criterion { id: 4, name: "softmax contract", budget: Duration::from_secs(1), run: softmax_contract },
        Criterion { id: 5, name: "freeze strategies touch only declared blocks", budget: Duration::from_secs(600), run: freeze_contract },
        Criterion { id: 6, name: "zero-weight head receives no update", budget: Duration::from_secs(60), run: gradient_routing },
        Criterion { id: 7, name: "early stopping matches oracle", budget: Duration::from_secs(1), run: early_stopping_oracle },
        Criterion { id: 8, name: "colour fixture is learnable", budget: Duration::from_secs(900), run: synthetic_training },
        Criterion { id: 9, name: "k-fold sizes, coverage and averages", budget: Duration::from_secs(2700), run: kfold_properties },
        Criterion { id: 10, name: "polarization index grid", budget: Duration::from_secs(1), run: polarization_grid },
        Criterion { id: 11, name: "training is deterministic", budget: Duration::from_secs(1200), run: determinism },
    ];

    let default_hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut failures = Vec::new();
    let stdout = std::io::stdout();
    for c in &criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let verdict = match outcome {
            Ok(()) if elapsed <= c.budget => Ok(()),
            Ok(()) => Err(format!("took {elapsed:.2?}, budget {:?}", c.budget)),
            Err(payload) => Err(payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let mut out = stdout.lock();
        match &verdict {
            Ok(()) => writeln!(out, "[PASS] {:>2} {} ({elapsed:.2?})", c.id, c.name).unwrap(),
            Err(reason) => {
                writeln!(out, "[FAIL] {:>2} {} ({elapsed:.2?}): {reason}", c.id, c.name).unwrap();
                failures.push(c.id);
            }
        }
    }
    panic::set_hook(default_hook);
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
