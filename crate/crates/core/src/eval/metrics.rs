use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::labels::Category;

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(EvalError::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Mean squared error.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

/// 3×3 counts; rows are true classes, columns predicted, both ordered
/// negative, neutral, positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: Category) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    pub fn predicted(&self, class: Category) -> u64 {
        self.counts.iter().map(|row| row[class.index()]).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    /// Comma-delimited rows with a header, for external plotting.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("true\\predicted,negative,neutral,positive\n");
        for c in Category::ALL {
            let row = self.counts[c.index()];
            out.push_str(&format!("{},{},{},{}\n", c.key(), row[0], row[1], row[2]));
        }
        out
    }
}

pub fn confusion_matrix(truth: &[Category], predicted: &[Category]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(predicted) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest scores for `class`. A zero denominator yields 0.
pub fn precision_recall_f1(cm: &ConfusionMatrix, class: Category) -> ClassScores {
    let tp = cm.counts[class.index()][class.index()];
    let precision = ratio(tp, cm.predicted(class));
    let recall = ratio(tp, cm.support(class));
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassScores {
        precision,
        recall,
        f1,
    }
}

/// Support-weighted mean of the per-class F1 scores.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let sum: f64 = Category::ALL
        .iter()
        .map(|&c| cm.support(c) as f64 * precision_recall_f1(cm, c).f1)
        .sum();
    Ok(sum / total as f64)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    Ok(cm.correct() as f64 / total as f64)
}
