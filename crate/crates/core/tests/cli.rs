mod common;

use std::fs;
use std::path::{Path, PathBuf};

use polyview::cli::{cmd_aggregate, cmd_cv, cmd_evaluate, cmd_predict, cmd_train, run, EvaluateOptions};
use polyview::dataset::synthetic::write_color_fixture;
use polyview::labels::Variable;
use serde_json::Value;

use common::{tiny_model_toml, write_run_config};

const FIXTURE_CSV: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/survey_816.csv");
const HEADER: &str = "respondent_id,party,image_id,sentiment,subject_of_harm,object_of_harm,accuracy\n";

fn run_cli(args: &[&str]) -> i32 {
    run(std::iter::once("polyview").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Colour fixture plus a run config for it; returns (config, labels, images).
fn setup(dir: &Path, task: &str, n: usize) -> (PathBuf, PathBuf, PathBuf) {
    let (labels, images) = write_color_fixture(&dir.join("fixture"), n, 2).unwrap();
    let config = write_run_config(
        dir,
        &labels,
        &images,
        &dir.join("runs"),
        &tiny_model_toml("resnet50v2", "v1", task),
        "max_epochs = 2\npatience = 2\nseed = 2",
    );
    (config, labels, images)
}

#[test]
fn help_and_bad_arguments() {
    assert_eq!(run_cli(&["--help"]), 0);
    assert_eq!(run_cli(&["frobnicate"]), 2);
    assert_eq!(run_cli(&["cv"]), 2);
}

#[test]
fn aggregate_writes_labels_tables_plots_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("out/labels.json");
    assert_eq!(run_cli(&["aggregate", FIXTURE_CSV, "--out", s(&labels)]), 0);
    let out = dir.path().join("out");
    for f in ["category_table.txt", "gap_report.json", "gap_table.txt", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let svgs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert_eq!(svgs, 4);
    assert_eq!(read_json(&labels)["schema_version"], 1);
    assert_eq!(read_json(&out.join("gap_report.json"))["schema_version"], 1);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["outputs"].as_object().unwrap().len(), 8);
    assert!(manifest["reproducible"].is_null());
}

#[test]
fn independents_only_survey_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    fs::write(&csv, format!("{HEADER}r1,Independent,img1,4,4,4,4\nr2,other,img1,2,3,4,5\n")).unwrap();
    let err = cmd_aggregate(&csv, &dir.path().join("l.json"), None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.message().contains("no eligible respondents"), "{err}");
    assert_eq!(run_cli(&["aggregate", s(&csv), "--out", s(&dir.path().join("l.json"))]), 2);
}

#[test]
fn single_respondent_survey_does_not_crash() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    fs::write(&csv, format!("{HEADER}r1,Democrat,img1,6,5,2,7\n")).unwrap();
    let summary = cmd_aggregate(&csv, &dir.path().join("l.json"), None).unwrap();
    assert_eq!(summary.n_images, 1);
    assert!(summary.gap_table.contains("n/a"));
    let svg = fs::read_to_string(dir.path().join("density_sentiment.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn unknown_backbone_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_run_config(
        dir.path(),
        Path::new("l.json"),
        Path::new("img"),
        Path::new("runs"),
        "backbone = \"vgg16\"\nversion = \"v1\"\ntask = \"classification\"",
        "",
    );
    let err = cmd_train(&config, &mut std::io::sink()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.message().contains("backbone"), "{err}");
    assert_eq!(run_cli(&["train", s(&config)]), 2);
}

#[test]
fn missing_pretrained_weights_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (labels, images) = write_color_fixture(&dir.path().join("fixture"), 10, 1).unwrap();
    let config = write_run_config(
        dir.path(),
        &labels,
        &images,
        &dir.path().join("runs"),
        "backbone = \"resnet50v2\"\nversion = \"v1\"\ntask = \"classification\"\npretrained = \"no-such-source\"",
        "",
    );
    let err = cmd_train(&config, &mut std::io::sink()).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
    assert!(err.message().contains("no-such-source"), "{err}");
}

#[test]
fn classification_train_evaluate_predict() {
    let dir = tempfile::tempdir().unwrap();
    let (config, labels, images) = setup(dir.path(), "classification", 30);
    let mut progress = Vec::new();
    let trained = cmd_train(&config, &mut progress).unwrap();
    let progress = String::from_utf8(progress).unwrap();
    assert_eq!(progress, trained.epoch_log);
    assert_eq!(progress.lines().count(), 2);
    for f in ["checkpoint/weights.safetensors", "checkpoint/meta.json", "state.json", "epochs.log", "manifest.json", "config.toml"] {
        assert!(trained.run_path.join(f).is_file(), "{f}");
    }
    assert_eq!(read_json(&trained.run_path.join("state.json"))["schema_version"], 1);
    let checkpoint = trained.run_path.join("checkpoint");

    let out = dir.path().join("eval");
    let options = EvaluateOptions::default();
    let summary = cmd_evaluate(&checkpoint, &labels, &images, &out, &options).unwrap();
    assert_eq!(summary.plots.len(), 2);
    assert!(summary.plots.iter().all(|p| p.file_name().unwrap().to_str().unwrap().starts_with("confusion_")));
    let metrics = read_json(&out.join("metrics.json"));
    assert_eq!(metrics["n"], 30);
    assert!(out.join("confusion_dem.csv").is_file());

    let validation = cmd_evaluate(
        &checkpoint,
        &labels,
        &images,
        &dir.path().join("eval_val"),
        &EvaluateOptions {
            variable: Some(Variable::Sentiment),
            validation_only: true,
        },
    )
    .unwrap();
    assert_eq!(validation.report.n, 6);

    let mismatch = cmd_evaluate(
        &checkpoint,
        &labels,
        &images,
        &dir.path().join("eval_bad"),
        &EvaluateOptions {
            variable: Some(Variable::SubjectOfHarm),
            validation_only: false,
        },
    )
    .unwrap_err();
    assert_eq!(mismatch.exit_code(), 2);
    assert!(mismatch.message().contains("subject_of_harm"), "{mismatch}");

    let image = images.join("syn_000.png");
    let out_json = dir.path().join("pred/out.json");
    let preds = cmd_predict(&checkpoint, &[image.clone()], Some(&out_json)).unwrap();
    assert_eq!(preds.len(), 1);
    let record = &read_json(&out_json)["predictions"][0];
    assert_eq!(record["image_id"], "syn_000");
    for key in ["dem_label", "rep_label", "polarization", "dem_probabilities"] {
        assert!(!record[key].is_null(), "{key}");
    }
    assert!(record.get("dem_score").is_none());
    assert!(dir.path().join("pred/out.manifest.json").is_file());

    let empty = cmd_predict(&checkpoint, &[], None).unwrap_err();
    assert_eq!(empty.exit_code(), 2);
    assert_eq!(run_cli(&["predict", s(&checkpoint)]), 2);
    assert_eq!(run_cli(&["predict", s(&checkpoint), s(&image)]), 0);
    assert_eq!(run_cli(&["predict", s(&checkpoint), s(&images.join("missing.png"))]), 3);
}

#[test]
fn regression_evaluation_emits_four_plots() {
    let dir = tempfile::tempdir().unwrap();
    let (config, labels, images) = setup(dir.path(), "regression", 20);
    let trained = cmd_train(&config, &mut std::io::sink()).unwrap();
    let out = dir.path().join("eval");
    let summary = cmd_evaluate(
        &trained.run_path.join("checkpoint"),
        &labels,
        &images,
        &out,
        &EvaluateOptions::default(),
    )
    .unwrap();
    let mut names: Vec<String> = summary
        .plots
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["residuals_dem.svg", "residuals_rep.svg", "scatter_dem.svg", "scatter_rep.svg"]);
    let preds = read_json(&out.join("predictions.json"));
    let first = &preds["predictions"][0];
    assert!(first["dem_score"].is_number() && first["rep_score"].is_number());
    let metrics = read_json(&out.join("metrics.json"));
    assert!(metrics["dem"]["mae"].is_number(), "{metrics}");
}

#[test]
fn rerun_with_same_inputs_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _, _) = setup(dir.path(), "classification", 20);
    let first = cmd_train(&config, &mut std::io::sink()).unwrap();
    let snapshot: Vec<(String, Vec<u8>)> = ["state.json", "validation_predictions.json", "checkpoint/weights.safetensors"]
        .iter()
        .map(|f| (f.to_string(), fs::read(first.run_path.join(f)).unwrap()))
        .collect();
    for (f, _) in &snapshot {
        fs::remove_file(first.run_path.join(f)).unwrap();
    }
    let second = cmd_train(&config, &mut std::io::sink()).unwrap();
    for (f, bytes) in &snapshot {
        assert_eq!(&fs::read(second.run_path.join(f)).unwrap(), bytes, "{f}");
    }
    assert_eq!(read_json(&second.run_path.join("manifest.json"))["reproducible"], true);
}

#[test]
fn cv_rejects_k1_and_renders_consistent_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _, _) = setup(dir.path(), "classification", 25);
    let err = cmd_cv(&config, 1, &mut std::io::sink()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert_eq!(run_cli(&["cv", s(&config), "--k", "1"]), 2);

    let (report, out) = cmd_cv(&config, 5, &mut std::io::sink()).unwrap();
    let text = fs::read_to_string(out.join("cv_table.md")).unwrap();
    let json = read_json(&out.join("cv_report.json"));
    assert_eq!(text.lines().filter(|l| l.starts_with("| ") && !l.contains("---")).count(), 1 + 5 + 1);
    let average_line = text.lines().find(|l| l.contains("**average**")).unwrap();
    for (col, v) in &report.average {
        assert_eq!(json["average"][col].as_f64().unwrap(), *v, "{col}");
        assert!(average_line.contains(&format!("**{v}**")), "{col} = {v} missing from {average_line}");
    }
    for fold in report.folds.iter() {
        let row = text
            .lines()
            .find(|l| l.starts_with(&format!("| {} |", fold.fold)))
            .unwrap_or_else(|| panic!("row for fold {}", fold.fold));
        if let polyview::eval::FoldOutcome::Completed { report: r, .. } = &fold.outcome {
            for v in r.summary().values() {
                assert!(row.contains(&format!("{v}")), "{v} missing from {row}");
            }
        }
    }
}
