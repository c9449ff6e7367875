//! Fine-tuning with Adam and early stopping, checkpoints and prediction.

mod checkpoint;
mod fit;
mod predict;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, MetricSummary, CHECKPOINT_SCHEMA_VERSION};
pub use fit::{train, train_with_observer, validation_loss, EpochRecord};
pub use predict::{predict, HeadPrediction, PairedPrediction, Predictor};

use crate::dataset::{DatasetError, Preprocessing};
use crate::model::{ModelError, Task};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {field}: {message}")]
    Config { field: &'static str, message: String },
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("index {index} out of range for {len} examples")]
    BadIndex { index: usize, len: usize },
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged {
        epoch: usize,
        loss: f64,
        state: Box<TrainingState>,
    },
    #[error("images were preprocessed with `{found}` but the model expects `{expected}`")]
    PreprocessingMismatch {
        expected: Preprocessing,
        found: Preprocessing,
    },
    #[error("examples mix label variables")]
    MixedVariables,
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

/// Optimisation recipe. These are the keys of the `[training]` table in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            max_epochs: 50,
            batch_size: 32,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, message: String| Err(TrainError::Config { field, message });
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", format!("must be positive, got {}", self.learning_rate));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs", "must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return bad(
                "patience",
                format!("must lie in 1..={}, got {}", self.max_epochs, self.patience),
            );
        }
        Ok(())
    }
}

/// Per-head validation metric tracked each epoch: accuracy for
/// classification, MAE of clipped scores for regression.
pub fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Classification => "acc",
        Task::Regression => "mae",
    }
}

/// Progress of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    /// Completed epochs.
    pub epoch: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// `[dem, rep]` validation metric per epoch.
    pub val_metric: Vec<[f64; 2]>,
    pub best_val_loss: f64,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub stopped_early: bool,
}

/// Patience-based stopping rule; an improvement is any strictly lower loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since: usize,
    seen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since: 0,
            seen: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> Verdict {
        self.seen += 1;
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = self.seen;
            self.since = 0;
            Verdict::Improved
        } else {
            self.since += 1;
            if self.since >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn since_improvement(&self) -> usize {
        self.since
    }
}

/// Number of epochs a run lasts for a given validation-loss sequence.
pub fn stopping_epoch(val_losses: &[f64], patience: usize, max_epochs: usize) -> usize {
    let mut rule = EarlyStopping::new(patience);
    for (i, &loss) in val_losses.iter().take(max_epochs).enumerate() {
        if rule.observe(loss) == Verdict::Stop {
            return i + 1;
        }
    }
    max_epochs.min(val_losses.len())
}
