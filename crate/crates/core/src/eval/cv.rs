use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Value};

use super::report::{MetricsReport, REPORT_SCHEMA_VERSION};
use super::{EvalError, Result};
use crate::dataset::{make_folds, LabeledExample};
use crate::model::{build_model, ModelConfig, Task};
use crate::train::{train_with_observer, EpochRecord, Predictor, TrainError, TrainingConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum FoldOutcome {
    Completed {
        report: MetricsReport,
        best_epoch: usize,
        epochs_run: usize,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    /// 1-based.
    pub fold: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub outcome: FoldOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CVReport {
    pub task: Task,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    /// Simple mean over completed folds.
    pub average: BTreeMap<String, f64>,
}

/// Column-wise arithmetic mean of metric rows.
pub fn average_rows(rows: &[BTreeMap<String, f64>]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for row in rows {
        for (k, &v) in row {
            let e = sums.entry(k.clone()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// K-fold cross-validation with a freshly built model per fold.
pub fn run_cv(
    examples: &[LabeledExample],
    model_config: &ModelConfig,
    training_config: &TrainingConfig,
    k: usize,
    seed: u64,
) -> Result<CVReport> {
    run_cv_with(examples, model_config, training_config, k, seed, |_, _| {})
}

/// [`run_cv`] reporting every epoch as `(fold, record)`.
pub fn run_cv_with(
    examples: &[LabeledExample],
    model_config: &ModelConfig,
    training_config: &TrainingConfig,
    k: usize,
    seed: u64,
    mut observer: impl FnMut(usize, &EpochRecord),
) -> Result<CVReport> {
    if k < 2 {
        return Err(EvalError::BadK(k));
    }
    let plan = make_folds(examples.len(), k, seed)?;
    let mut folds = Vec::with_capacity(k);
    for i in 0..k {
        let fold = i + 1;
        let split = plan.split(i);
        let model = build_model(model_config)?;
        let trained = train_with_observer(&model, examples, &split, training_config, |r| observer(fold, r));
        let outcome = match trained {
            Ok((checkpoint, state)) => {
                let predictor = Predictor::new(model, checkpoint.preprocessing, checkpoint.variable);
                let val: Vec<&LabeledExample> = split.validation.iter().map(|&j| &examples[j]).collect();
                let images: Vec<_> = val.iter().map(|e| e.image.clone()).collect();
                let preds = predictor.predict(&images)?;
                FoldOutcome::Completed {
                    report: MetricsReport::from_predictions(model_config.task, &val, &preds)?,
                    best_epoch: state.best_epoch,
                    epochs_run: state.epoch,
                }
            }
            Err(TrainError::Diverged { epoch, loss, .. }) => {
                log::warn!("fold {fold} diverged at epoch {epoch} (loss {loss}); excluded from the average");
                FoldOutcome::Failed {
                    reason: format!("diverged at epoch {epoch}: loss {loss}"),
                }
            }
            Err(e) => return Err(e.into()),
        };
        folds.push(FoldResult {
            fold,
            n_train: split.train.len(),
            n_validation: split.validation.len(),
            outcome,
        });
    }
    let rows: Vec<_> = folds
        .iter()
        .filter_map(|f| match &f.outcome {
            FoldOutcome::Completed { report, .. } => Some(report.summary()),
            FoldOutcome::Failed { .. } => None,
        })
        .collect();
    Ok(CVReport {
        task: model_config.task,
        k,
        seed,
        folds,
        average: average_rows(&rows),
    })
}

impl CVReport {
    pub fn columns(&self) -> Vec<String> {
        MetricsReport::columns(self.task)
    }

    pub fn to_json(&self) -> Value {
        let folds: Vec<Value> = self
            .folds
            .iter()
            .map(|f| {
                let mut v = json!({
                    "fold": f.fold,
                    "n_train": f.n_train,
                    "n_validation": f.n_validation,
                });
                match &f.outcome {
                    FoldOutcome::Completed {
                        report,
                        best_epoch,
                        epochs_run,
                    } => {
                        v["status"] = json!("completed");
                        v["metrics"] = json!(report.summary());
                        v["report"] = report.to_json();
                        v["best_epoch"] = json!(best_epoch);
                        v["epochs_run"] = json!(epochs_run);
                    }
                    FoldOutcome::Failed { reason } => {
                        v["status"] = json!("failed");
                        v["reason"] = json!(reason);
                    }
                }
                v
            })
            .collect();
        json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "task": self.task.to_string(),
            "k": self.k,
            "seed": self.seed,
            "folds": folds,
            "average": self.average,
        })
    }

    /// Markdown table: one row per fold and a bold average row. Numbers use
    /// the shortest representation that round-trips, as in the JSON.
    pub fn render_text(&self) -> String {
        let cols = self.columns();
        let mut out = String::new();
        let _ = writeln!(out, "| fold | n_validation | {} |", cols.join(" | "));
        let _ = writeln!(out, "|---|---|{}", "---|".repeat(cols.len()));
        for f in &self.folds {
            let cells: Vec<String> = match &f.outcome {
                FoldOutcome::Completed { report, .. } => {
                    let s = report.summary();
                    cols.iter().map(|c| s[c].to_string()).collect()
                }
                FoldOutcome::Failed { .. } => vec!["failed".into(); cols.len()],
            };
            let _ = writeln!(out, "| {} | {} | {} |", f.fold, f.n_validation, cells.join(" | "));
        }
        let avg: Vec<String> = cols
            .iter()
            .map(|c| match self.average.get(c) {
                Some(v) => format!("**{v}**"),
                None => "n/a".into(),
            })
            .collect();
        let _ = writeln!(out, "| **average** | | {} |", avg.join(" | "));
        out
    }
}
