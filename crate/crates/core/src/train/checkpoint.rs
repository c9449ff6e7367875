use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use super::{Result, TrainError, TrainingConfig};
use crate::dataset::Preprocessing;
use crate::labels::Variable;
use crate::model::{build_untrained, ModelConfig, ModelHandle};
use crate::report::{replace_atomic, write_atomic};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

const WEIGHTS_FILE: &str = "weights.safetensors";
const META_FILE: &str = "meta.json";

/// Validation summary of the kept epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    /// `acc` or `mae`.
    pub metric: String,
    pub dem: f64,
    pub rep: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    schema_version: u32,
    model: ModelConfig,
    training: TrainingConfig,
    variable: Variable,
    preprocessing: Preprocessing,
    split_fingerprint: String,
    validation_ids: Vec<String>,
    metrics: MetricSummary,
}

/// Trained weights together with everything needed to rebuild and audit them.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub variable: Variable,
    pub preprocessing: Preprocessing,
    /// SHA-256 over the train and validation image ids.
    pub split_fingerprint: String,
    pub validation_ids: Vec<String>,
    pub metrics: MetricSummary,
    pub weights: HashMap<String, Tensor>,
}

pub(crate) fn split_fingerprint(train_ids: &[String], validation_ids: &[String]) -> String {
    let text = format!("train:{}\nvalidation:{}", train_ids.join(","), validation_ids.join(","));
    crate::report::sha256_hex(text.as_bytes())
}

impl Checkpoint {
    /// Rebuilds the network and loads the stored weights into it.
    pub fn build_model(&self) -> Result<ModelHandle> {
        let model = build_untrained(&self.model)?;
        model
            .params()
            .set_from_map(&self.weights, |_| true)
            .map_err(TrainError::BadCheckpoint)?;
        Ok(model)
    }

    /// Writes `<dir>/weights.safetensors` and `<dir>/meta.json`, each atomically.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        replace_atomic(&dir.join(WEIGHTS_FILE), |tmp| -> Result<()> {
            candle_core::safetensors::save(&self.weights, tmp)?;
            Ok(())
        })?;
        let meta = serde_json::to_value(self.meta())?;
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        write_atomic(&dir.join(META_FILE), text.as_bytes())?;
        Ok(dir.to_path_buf())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(META_FILE))?;
        let meta: Meta = serde_json::from_str(&text)
            .map_err(|e| TrainError::BadCheckpoint(format!("{}: {e}", dir.join(META_FILE).display())))?;
        if meta.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(TrainError::BadCheckpoint(format!(
                "schema_version {} is not supported (expected {CHECKPOINT_SCHEMA_VERSION})",
                meta.schema_version
            )));
        }
        if meta.preprocessing != meta.model.preprocessing() {
            return Err(TrainError::BadCheckpoint(format!(
                "preprocessing `{}` does not match backbone {}",
                meta.preprocessing, meta.model.backbone
            )));
        }
        let weights = candle_core::safetensors::load(dir.join(WEIGHTS_FILE), &Device::Cpu)?;
        Ok(Self {
            model: meta.model,
            training: meta.training,
            variable: meta.variable,
            preprocessing: meta.preprocessing,
            split_fingerprint: meta.split_fingerprint,
            validation_ids: meta.validation_ids,
            metrics: meta.metrics,
            weights,
        })
    }

    fn meta(&self) -> Meta {
        Meta {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            model: self.model.clone(),
            training: self.training.clone(),
            variable: self.variable,
            preprocessing: self.preprocessing,
            split_fingerprint: self.split_fingerprint.clone(),
            validation_ids: self.validation_ids.clone(),
            metrics: self.metrics.clone(),
        }
    }
}
