//! Metrics, confusion matrices, cross-validation and the polarization index.

mod cv;
mod metrics;
mod report;

use thiserror::Error;

pub use cv::{average_rows, run_cv, run_cv_with, CVReport, FoldOutcome, FoldResult};
pub use metrics::{
    accuracy, confusion_matrix, mae, mse, precision_recall_f1, weighted_f1, ClassScores,
    ConfusionMatrix,
};
pub use report::{
    ClassificationMetrics, HeadMetrics, MetricsReport, RegressionMetrics, REPORT_SCHEMA_VERSION,
};

use crate::labels::{SCALE_MAX, SCALE_MIN};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("value {0} outside the rating scale [1, 7]")]
    OutOfRange(f64),
    #[error("prediction for `{found}` where `{expected}` was expected")]
    Misaligned { expected: String, found: String },
    #[error("cross-validation needs k >= 2, got {0}")]
    BadK(usize),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Absolute gap between the Dem and Rep labels of one image.
pub fn polarization_index(label_dem: f64, label_rep: f64) -> Result<f64> {
    for v in [label_dem, label_rep] {
        if !(SCALE_MIN..=SCALE_MAX).contains(&v) {
            return Err(EvalError::OutOfRange(v));
        }
    }
    Ok((label_dem - label_rep).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polarization_examples() {
        assert_eq!(polarization_index(6.0, 2.0).unwrap(), 4.0);
        assert_eq!(polarization_index(3.5, 3.5).unwrap(), 0.0);
        assert_eq!(polarization_index(1.0, 7.0).unwrap(), 6.0);
        assert!(matches!(polarization_index(0.5, 2.0), Err(EvalError::OutOfRange(_))));
        assert!(polarization_index(f64::NAN, 2.0).is_err());
    }
}
