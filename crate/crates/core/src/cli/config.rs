use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CliError, Result};
use crate::labels::Variable;
use crate::model::ModelConfig;
use crate::train::TrainingConfig;

/// Contents of a run config file (TOML). Relative paths are resolved
/// against the file's directory.
///
/// ```toml
/// labels = "data/labels.json"
/// images = "data/images"
/// variable = "sentiment"
/// run_dir = "runs"
/// run_id = "densenet169-v3"
///
/// [model]
/// backbone = "densenet169"
/// version = "v3"
/// task = "classification"
///
/// [training]
/// seed = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub labels: PathBuf,
    pub images: PathBuf,
    #[serde(default = "sentiment")]
    pub variable: Variable,
    #[serde(default = "runs")]
    pub run_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
}

fn sentiment() -> Variable {
    Variable::Sentiment
}

fn runs() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.labels, &mut cfg.images, &mut cfg.run_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.variable, Variable::Sentiment | Variable::SubjectOfHarm) {
            return Err(CliError::Validation(format!(
                "invalid config: variable: models are trained on sentiment or subject_of_harm, got {}",
                self.variable.key()
            )));
        }
        if let Some(id) = &self.run_id {
            if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
                return Err(CliError::Validation(format!(
                    "invalid config: run_id: `{id}` is not a plain directory name"
                )));
            }
        }
        self.model.validate()?;
        self.training.validate()?;
        Ok(())
    }

    pub fn run_id(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| {
            format!(
                "{}-{}-{}-{}-seed{}",
                self.model.backbone,
                self.model.version,
                self.model.task,
                self.variable.key(),
                self.training.seed
            )
        })
    }

    pub fn run_path(&self) -> PathBuf {
        self.run_dir.join(self.run_id())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is representable as TOML")
    }
}
