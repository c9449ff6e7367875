use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{CliError, Result, RunConfig};
use crate::dataset::{load_images, make_split, ImageRecord, LabeledExample, LoadedDataset};
use crate::eval::{run_cv_with, CVReport, HeadMetrics, MetricsReport};
use crate::labels::{
    aggregate_image_labels, compute_group_gap, export_labels, ingest_path, render_category_table,
    Variable, SCHEMA_VERSION,
};
use crate::model::build_model;
use crate::report::plot::{confusion_heatmap, density_overlay, group_color, residual_plot, scatter_plot};
use crate::report::{write_atomic, RunManifest};
use crate::train::{train_with_observer, Checkpoint, PairedPrediction, Predictor, TrainingState};

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn with_schema(mut value: Value) -> Value {
    if let Value::Object(m) = &mut value {
        m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    value
}

fn predictions_json(preds: &[PairedPrediction]) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "predictions": preds.iter().map(PairedPrediction::to_json).collect::<Vec<_>>(),
    })
}

fn note_skipped(dataset: &LoadedDataset) {
    for e in &dataset.manifest {
        log::warn!("skipping {}: {}", e.image_id, e.reason);
    }
}

#[derive(Debug, Clone)]
pub struct AggregateSummary {
    pub n_images: usize,
    pub dropped_other: usize,
    pub rejected_rows: usize,
    /// Per-variable category counts by group.
    pub category_table: String,
    pub gap_table: String,
    pub outputs: Vec<PathBuf>,
}

/// Survey CSV to label file, category table, gap report and density plots.
/// Side outputs go next to `out_labels` unless `out_dir` is given.
pub fn cmd_aggregate(survey_csv: &Path, out_labels: &Path, out_dir: Option<&Path>) -> Result<AggregateSummary> {
    let out_dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => out_labels.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    if !out_dir.as_os_str().is_empty() {
        fs::create_dir_all(&out_dir)?;
    }
    let mut manifest = RunManifest::new(
        "aggregate",
        json!({"survey": survey_csv.display().to_string(), "labels": out_labels.display().to_string()}),
    );
    manifest.add_input(survey_csv)?;

    let ingested = ingest_path(survey_csv)?;
    for r in &ingested.rejected {
        log::warn!("line {}: {}", r.line, r.reason);
    }
    let sets = aggregate_image_labels(&ingested.records)?;
    export_labels(&sets, out_labels)?;
    let mut outputs = vec![out_labels.to_path_buf()];

    let category_table = render_category_table(&sets);
    let table_path = out_dir.join("category_table.txt");
    write_atomic(&table_path, category_table.as_bytes())?;
    outputs.push(table_path);

    let gap = compute_group_gap(&sets)?;
    let gap_json = out_dir.join("gap_report.json");
    write_json(&gap_json, &with_schema(serde_json::to_value(&gap)?))?;
    outputs.push(gap_json);
    let gap_table = gap.render_table();
    let gap_txt = out_dir.join("gap_table.txt");
    write_atomic(&gap_txt, gap_table.as_bytes())?;
    outputs.push(gap_txt);
    for (v, g) in &gap.variables {
        let path = out_dir.join(format!("density_{}.svg", v.key()));
        let svg = density_overlay(&format!("{}: AES by party", v.title()), g);
        write_atomic(&path, svg.as_bytes())?;
        outputs.push(path);
    }

    for p in &outputs {
        manifest.add_output(p)?;
    }
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(AggregateSummary {
        n_images: sets.len(),
        dropped_other: ingested.dropped_other,
        rejected_rows: ingested.rejected.len(),
        category_table,
        gap_table,
        outputs,
    })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub run_path: PathBuf,
    pub state: TrainingState,
    pub epoch_log: String,
    pub validation_predictions: Vec<PairedPrediction>,
}

fn load_dataset(cfg: &RunConfig) -> Result<LoadedDataset> {
    let dataset = load_images(&cfg.images, &cfg.labels, cfg.variable, cfg.model.preprocessing())?;
    note_skipped(&dataset);
    Ok(dataset)
}

/// Trains per a run config. Epoch lines go to `progress` and to `<run>/epochs.log`.
pub fn cmd_train(config_file: &Path, progress: &mut dyn Write) -> Result<TrainSummary> {
    let cfg = RunConfig::load(config_file)?;
    let dataset = load_dataset(&cfg)?;
    let examples = &dataset.examples;
    let split = make_split(examples.len(), cfg.training.seed)?;
    let model = build_model(&cfg.model)?;
    let run_path = cfg.run_path();
    fs::create_dir_all(&run_path)?;

    let mut epoch_log = String::new();
    let mut io_error = None;
    let trained = train_with_observer(&model, examples, &split, &cfg.training, |r| {
        let line = format!("{r}\n");
        if let Err(e) = progress.write_all(line.as_bytes()) {
            io_error.get_or_insert(e);
        }
        epoch_log.push_str(&line);
    });
    let log_path = run_path.join("epochs.log");
    write_atomic(&log_path, epoch_log.as_bytes())?;
    let (checkpoint, state) = match trained {
        Ok(v) => v,
        Err(crate::train::TrainError::Diverged { epoch, loss, state }) => {
            write_json(&run_path.join("state.json"), &with_schema(serde_json::to_value(&*state)?))?;
            return Err(CliError::Runtime(format!(
                "training diverged at epoch {epoch} (loss {loss}); partial state in {}",
                run_path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(e) = io_error {
        return Err(e.into());
    }

    let checkpoint_dir = checkpoint.save(&run_path.join("checkpoint"))?;
    let state_path = run_path.join("state.json");
    write_json(&state_path, &with_schema(serde_json::to_value(&state)?))?;
    let config_path = run_path.join("config.toml");
    write_atomic(&config_path, cfg.to_toml().as_bytes())?;

    let predictor = Predictor::new(model, checkpoint.preprocessing, checkpoint.variable);
    let val_images: Vec<ImageRecord> = split.validation.iter().map(|&i| examples[i].image.clone()).collect();
    let validation_predictions = predictor.predict(&val_images)?;
    let preds_path = run_path.join("validation_predictions.json");
    write_json(&preds_path, &predictions_json(&validation_predictions))?;
    let skipped_path = run_path.join("skipped.txt");
    write_atomic(&skipped_path, dataset.manifest_text().as_bytes())?;

    let mut manifest = RunManifest::new("train", serde_json::to_value(&cfg)?);
    for p in [config_file, cfg.labels.as_path(), cfg.images.as_path()] {
        manifest.add_input(p)?;
    }
    for p in [&checkpoint_dir, &state_path, &config_path, &log_path, &preds_path, &skipped_path] {
        manifest.add_output(p)?;
    }
    manifest.write(&run_path.join("manifest.json"))?;
    Ok(TrainSummary {
        run_path,
        state,
        epoch_log,
        validation_predictions,
    })
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// Refuse unless the checkpoint was trained on this variable.
    pub variable: Option<Variable>,
    /// Score only the checkpoint's validation images.
    pub validation_only: bool,
}

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub report: MetricsReport,
    pub plots: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

/// Scores a checkpoint on labelled images and writes the report and plots to `out_dir`.
pub fn cmd_evaluate(
    checkpoint_dir: &Path,
    labels: &Path,
    images: &Path,
    out_dir: &Path,
    options: &EvaluateOptions,
) -> Result<EvaluateSummary> {
    let checkpoint = Checkpoint::load(checkpoint_dir)?;
    if let Some(v) = options.variable {
        if v != checkpoint.variable {
            return Err(CliError::Validation(format!(
                "checkpoint was trained on `{}` labels but `{}` was requested",
                checkpoint.variable.key(),
                v.key()
            )));
        }
    }
    let dataset = load_images(images, labels, checkpoint.variable, checkpoint.preprocessing)?;
    note_skipped(&dataset);
    let examples: Vec<&LabeledExample> = if options.validation_only {
        let keep: std::collections::HashSet<&str> = checkpoint.validation_ids.iter().map(String::as_str).collect();
        dataset.examples.iter().filter(|e| keep.contains(e.image_id())).collect()
    } else {
        dataset.examples.iter().collect()
    };
    if examples.is_empty() {
        return Err(CliError::Validation("no labelled images to evaluate".into()));
    }
    let predictor = Predictor::from_checkpoint(&checkpoint)?;
    let images_in: Vec<ImageRecord> = examples.iter().map(|e| e.image.clone()).collect();
    let preds = predictor.predict(&images_in)?;
    let report = MetricsReport::from_predictions(checkpoint.model.task, &examples, &preds)?;

    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    let report_path = out_dir.join("metrics.json");
    write_json(&report_path, &report.to_json())?;
    outputs.push(report_path);
    let preds_path = out_dir.join("predictions.json");
    write_json(&preds_path, &predictions_json(&preds))?;
    outputs.push(preds_path);

    let mut plots = Vec::new();
    let groups = [
        ("dem", crate::labels::Group::Dem, &report.dem),
        ("rep", crate::labels::Group::Rep, &report.rep),
    ];
    for (key, group, head) in groups {
        match head {
            HeadMetrics::Classification(m) => {
                let svg = out_dir.join(format!("confusion_{key}.svg"));
                write_atomic(&svg, confusion_heatmap(&format!("{key} head"), &m.confusion).as_bytes())?;
                plots.push(svg);
                let csv = out_dir.join(format!("confusion_{key}.csv"));
                write_atomic(&csv, m.confusion.to_delimited().as_bytes())?;
                outputs.push(csv);
            }
            HeadMetrics::Regression(_) => {
                let actual: Vec<f64> = examples
                    .iter()
                    .map(|e| if key == "dem" { e.target_dem.aes } else { e.target_rep.aes })
                    .collect();
                let predicted: Vec<f64> = preds
                    .iter()
                    .map(|p| if key == "dem" { p.dem.scale_value() } else { p.rep.scale_value() })
                    .collect();
                let color = group_color(group);
                let scatter = out_dir.join(format!("scatter_{key}.svg"));
                write_atomic(
                    &scatter,
                    scatter_plot(&format!("{key} head: actual vs predicted"), &actual, &predicted, color).as_bytes(),
                )?;
                let resid = out_dir.join(format!("residuals_{key}.svg"));
                write_atomic(
                    &resid,
                    residual_plot(&format!("{key} head: residuals"), &actual, &predicted, color).as_bytes(),
                )?;
                plots.push(scatter);
                plots.push(resid);
            }
        }
    }
    outputs.extend(plots.iter().cloned());

    let mut manifest = RunManifest::new(
        "evaluate",
        json!({
            "checkpoint": checkpoint_dir.display().to_string(),
            "variable": options.variable.map(|v| v.key()),
            "validation_only": options.validation_only,
        }),
    );
    for p in [checkpoint_dir, labels, images] {
        manifest.add_input(p)?;
    }
    for p in &outputs {
        manifest.add_output(p)?;
    }
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(EvaluateSummary { report, plots, outputs })
}

/// K-fold cross-validation per a run config; writes `cv_report.json` and
/// `cv_table.md` under `<run_dir>/<run_id>-cv`.
pub fn cmd_cv(config_file: &Path, k: usize, progress: &mut dyn Write) -> Result<(CVReport, PathBuf)> {
    if k < 2 {
        return Err(CliError::Validation(format!("k must be at least 2, got {k}")));
    }
    let cfg = RunConfig::load(config_file)?;
    let dataset = load_dataset(&cfg)?;
    let mut io_error = None;
    let report = run_cv_with(
        &dataset.examples,
        &cfg.model,
        &cfg.training,
        k,
        cfg.training.seed,
        |fold, r| {
            if let Err(e) = writeln!(progress, "fold {fold}  {r}") {
                io_error.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    let out_dir = cfg.run_dir.join(format!("{}-cv", cfg.run_id()));
    fs::create_dir_all(&out_dir)?;
    let json_path = out_dir.join("cv_report.json");
    write_json(&json_path, &report.to_json())?;
    let table_path = out_dir.join("cv_table.md");
    write_atomic(&table_path, report.render_text().as_bytes())?;

    let mut manifest = RunManifest::new("cv", json!({"config": serde_json::to_value(&cfg)?, "k": k}));
    for p in [config_file, cfg.labels.as_path(), cfg.images.as_path()] {
        manifest.add_input(p)?;
    }
    manifest.add_output(&json_path)?;
    manifest.add_output(&table_path)?;
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok((report, out_dir))
}

/// Paired labels and polarization for individual image files. The image id is the file stem.
pub fn cmd_predict(checkpoint_dir: &Path, image_paths: &[PathBuf], out: Option<&Path>) -> Result<Vec<PairedPrediction>> {
    if image_paths.is_empty() {
        return Err(CliError::Validation("no images given".into()));
    }
    let checkpoint = Checkpoint::load(checkpoint_dir)?;
    let mut images = Vec::with_capacity(image_paths.len());
    for p in image_paths {
        let id = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| CliError::Validation(format!("{} has no file name", p.display())))?;
        images.push(ImageRecord::open(id, p, checkpoint.preprocessing)?);
    }
    let preds = Predictor::from_checkpoint(&checkpoint)?.predict(&images)?;
    if let Some(out) = out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        write_json(out, &predictions_json(&preds))?;
        let mut manifest = RunManifest::new(
            "predict",
            json!({"checkpoint": checkpoint_dir.display().to_string()}),
        );
        manifest.add_input(checkpoint_dir)?;
        for p in image_paths {
            manifest.add_input(p)?;
        }
        manifest.add_output(out)?;
        let manifest_path = out.with_file_name(format!(
            "{}.manifest.json",
            out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        ));
        manifest.write(&manifest_path)?;
    }
    Ok(preds)
}
