use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::metrics::{
    accuracy, confusion_matrix, mae, mse, precision_recall_f1, weighted_f1, ClassScores,
    ConfusionMatrix,
};
use super::{EvalError, Result};
use crate::dataset::LabeledExample;
use crate::labels::{Category, SCALE_MAX, SCALE_MIN};
use crate::model::Task;
use crate::train::PairedPrediction;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationMetrics {
    /// Indexed by [`Category::index`].
    pub per_class: [ClassScores; 3],
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeadMetrics {
    Classification(ClassificationMetrics),
    Regression(RegressionMetrics),
}

impl HeadMetrics {
    pub fn classification(truth: &[Category], predicted: &[Category]) -> Result<Self> {
        let cm = confusion_matrix(truth, predicted)?;
        Ok(HeadMetrics::Classification(ClassificationMetrics {
            per_class: Category::ALL.map(|c| precision_recall_f1(&cm, c)),
            weighted_f1: weighted_f1(&cm)?,
            accuracy: accuracy(&cm)?,
            confusion: cm,
        }))
    }

    /// Predictions are clipped to the rating scale before scoring.
    pub fn regression(truth: &[f64], predicted: &[f64]) -> Result<Self> {
        let clipped: Vec<f64> = predicted.iter().map(|v| v.clamp(SCALE_MIN, SCALE_MAX)).collect();
        Ok(HeadMetrics::Regression(RegressionMetrics {
            mae: mae(truth, &clipped)?,
            mse: mse(truth, &clipped)?,
        }))
    }

    /// Headline numbers in table-column order.
    pub fn headline(&self) -> [(&'static str, f64); 2] {
        match self {
            HeadMetrics::Classification(m) => [("weighted_f1", m.weighted_f1), ("accuracy", m.accuracy)],
            HeadMetrics::Regression(m) => [("mae", m.mae), ("mse", m.mse)],
        }
    }

    pub fn confusion(&self) -> Option<&ConfusionMatrix> {
        match self {
            HeadMetrics::Classification(m) => Some(&m.confusion),
            HeadMetrics::Regression(_) => None,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            HeadMetrics::Classification(m) => {
                let per_class: Map<String, Value> = Category::ALL
                    .iter()
                    .map(|c| {
                        let s = m.per_class[c.index()];
                        (c.key().to_string(), json!({"precision": s.precision, "recall": s.recall, "f1": s.f1}))
                    })
                    .collect();
                json!({
                    "per_class": per_class,
                    "weighted_f1": m.weighted_f1,
                    "accuracy": m.accuracy,
                    "confusion_matrix": m.confusion.counts,
                })
            }
            HeadMetrics::Regression(m) => json!({"mae": m.mae, "mse": m.mse}),
        }
    }
}

/// Metrics of both heads on one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub task: Task,
    pub n: usize,
    pub dem: HeadMetrics,
    pub rep: HeadMetrics,
}

impl MetricsReport {
    /// Scores predictions against examples; both slices must list the same images in order.
    pub fn from_predictions(task: Task, examples: &[&LabeledExample], predictions: &[PairedPrediction]) -> Result<Self> {
        if examples.len() != predictions.len() {
            return Err(EvalError::LengthMismatch {
                left: examples.len(),
                right: predictions.len(),
            });
        }
        for (e, p) in examples.iter().zip(predictions) {
            if e.image_id() != p.image_id {
                return Err(EvalError::Misaligned {
                    expected: e.image_id().to_string(),
                    found: p.image_id.clone(),
                });
            }
        }
        let (dem, rep) = match task {
            Task::Classification => {
                let truth = |f: fn(&LabeledExample) -> Category| examples.iter().map(|e| f(e)).collect::<Vec<_>>();
                let dem_pred: Vec<Category> = predictions.iter().map(|p| p.dem.category).collect();
                let rep_pred: Vec<Category> = predictions.iter().map(|p| p.rep.category).collect();
                (
                    HeadMetrics::classification(&truth(|e| e.target_dem.category), &dem_pred)?,
                    HeadMetrics::classification(&truth(|e| e.target_rep.category), &rep_pred)?,
                )
            }
            Task::Regression => {
                let truth = |f: fn(&LabeledExample) -> f64| examples.iter().map(|e| f(e)).collect::<Vec<_>>();
                let dem_pred: Vec<f64> = predictions.iter().map(|p| p.dem.scale_value()).collect();
                let rep_pred: Vec<f64> = predictions.iter().map(|p| p.rep.scale_value()).collect();
                (
                    HeadMetrics::regression(&truth(|e| e.target_dem.aes), &dem_pred)?,
                    HeadMetrics::regression(&truth(|e| e.target_rep.aes), &rep_pred)?,
                )
            }
        };
        Ok(Self {
            task,
            n: examples.len(),
            dem,
            rep,
        })
    }

    /// Column names of [`MetricsReport::summary`] in display order.
    pub fn columns(task: Task) -> Vec<String> {
        let names: [&str; 2] = match task {
            Task::Classification => ["weighted_f1", "accuracy"],
            Task::Regression => ["mae", "mse"],
        };
        ["dem", "rep"]
            .iter()
            .flat_map(|g| names.iter().map(move |n| format!("{g}_{n}")))
            .collect()
    }

    /// Flat `{group}_{metric}` map of the headline numbers.
    pub fn summary(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (g, head) in [("dem", &self.dem), ("rep", &self.rep)] {
            for (name, v) in head.headline() {
                out.insert(format!("{g}_{name}"), v);
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "task": self.task.to_string(),
            "n": self.n,
            "dem": self.dem.to_json(),
            "rep": self.rep.to_json(),
        })
    }
}
