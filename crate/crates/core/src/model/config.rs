use std::fmt;
use std::str::FromStr;

use candle_core::DType;
use serde::{Deserialize, Serialize};

use super::{BackboneFamily, ModelError, Result};
use crate::dataset::Preprocessing;

/// Which part of the trunk is retrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FreezeVersion {
    /// Whole trunk frozen; only the heads train.
    V1,
    /// Last block and its transition/pooling companion retrained.
    V2,
    /// Last two blocks retrained.
    V3,
}

impl FromStr for FreezeVersion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "v1" | "1" => Ok(FreezeVersion::V1),
            "v2" | "2" => Ok(FreezeVersion::V2),
            "v3" | "3" => Ok(FreezeVersion::V3),
            _ => Err(format!("version: unknown freeze version `{s}` (expected v1, v2 or v3)")),
        }
    }
}

impl TryFrom<String> for FreezeVersion {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<FreezeVersion> for String {
    fn from(v: FreezeVersion) -> String {
        v.to_string()
    }
}

impl fmt::Display for FreezeVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreezeVersion::V1 => "v1",
            FreezeVersion::V2 => "v2",
            FreezeVersion::V3 => "v3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Task {
    /// Three-way softmax per head, cross-entropy loss.
    Classification,
    /// One linear output per head on the [1, 7] scale, squared-error loss.
    Regression,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            _ => Err(format!("task: unknown task `{s}` (expected classification or regression)")),
        }
    }
}

impl TryFrom<String> for Task {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Task> for String {
    fn from(t: Task) -> String {
        t.to_string()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        })
    }
}

impl Task {
    pub fn outputs(self) -> usize {
        match self {
            Task::Classification => 3,
            Task::Regression => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

/// Width multiplier and per-stage depths of the trunk.
///
/// The defaults give the standard architecture. Smaller values build a
/// structurally identical but cheaper trunk, which only makes sense with
/// randomly initialised weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrunkScale {
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depths: Option<[usize; 4]>,
}

fn one() -> f64 {
    1.0
}

impl Default for TrunkScale {
    fn default() -> Self {
        Self {
            width: 1.0,
            depths: None,
        }
    }
}

impl TrunkScale {
    pub fn tiny() -> Self {
        Self {
            width: 0.125,
            depths: Some([1, 1, 1, 1]),
        }
    }

    pub fn is_full(&self) -> bool {
        self.width == 1.0 && self.depths.is_none()
    }

    pub(crate) fn scaled(&self, channels: usize) -> usize {
        ((channels as f64 * self.width).round() as usize).max(1)
    }
}

/// Backbone family, weight source and scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneSpec {
    pub family: BackboneFamily,
    /// Corpus the trunk was pre-trained on (`imagenet`), or `none` for random init.
    pub pretrained_on: String,
    pub scale: TrunkScale,
}

impl BackboneSpec {
    pub fn preprocessing(&self) -> Preprocessing {
        self.family.preprocessing()
    }

    pub fn is_pretrained(&self) -> bool {
        self.pretrained_on != "none"
    }
}

/// Everything needed to build a model. These are the keys of the `[model]`
/// table in a run config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: BackboneFamily,
    #[serde(default = "imagenet")]
    pub pretrained: String,
    #[serde(default)]
    pub trunk: TrunkScale,
    pub version: FreezeVersion,
    pub task: Task,
    #[serde(default = "default_head_widths")]
    pub head_widths: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// `[w_dem, w_rep]`.
    #[serde(default = "default_loss_weights")]
    pub loss_weights: [f64; 2],
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
}

fn imagenet() -> String {
    "imagenet".into()
}

fn default_head_widths() -> Vec<usize> {
    vec![256, 128]
}

fn default_dropout() -> f64 {
    0.3
}

fn default_loss_weights() -> [f64; 2] {
    [1.0, 1.0]
}

impl ModelConfig {
    pub fn new(backbone: BackboneFamily, version: FreezeVersion, task: Task) -> Self {
        Self {
            backbone,
            pretrained: imagenet(),
            trunk: TrunkScale::default(),
            version,
            task,
            head_widths: default_head_widths(),
            dropout: default_dropout(),
            loss_weights: default_loss_weights(),
            seed: 0,
            precision: Precision::F32,
        }
    }

    /// Randomly initialised, downsized trunk for tests and fixtures.
    pub fn tiny(backbone: BackboneFamily, version: FreezeVersion, task: Task) -> Self {
        Self {
            pretrained: "none".into(),
            trunk: TrunkScale::tiny(),
            ..Self::new(backbone, version, task)
        }
    }

    pub fn backbone_spec(&self) -> BackboneSpec {
        BackboneSpec {
            family: self.backbone,
            pretrained_on: self.pretrained.clone(),
            scale: self.trunk.clone(),
        }
    }

    pub fn preprocessing(&self) -> Preprocessing {
        self.backbone.preprocessing()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, message: String| Err(ModelError::Config { field, message });
        let [wd, wr] = self.loss_weights;
        if !(wd.is_finite() && wr.is_finite()) || wd < 0.0 || wr < 0.0 {
            return bad("loss_weights", format!("weights must be finite and >= 0, got {:?}", self.loss_weights));
        }
        if wd == 0.0 && wr == 0.0 {
            return bad("loss_weights", "at least one weight must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", format!("must lie in [0, 1), got {}", self.dropout));
        }
        if self.head_widths.is_empty() || self.head_widths.contains(&0) {
            return bad("head_widths", format!("need one or more positive widths, got {:?}", self.head_widths));
        }
        if !(self.trunk.width.is_finite() && self.trunk.width > 0.0) {
            return bad("trunk.width", format!("must be positive, got {}", self.trunk.width));
        }
        if let Some(d) = self.trunk.depths {
            if d.contains(&0) {
                return bad("trunk.depths", format!("every stage needs at least one block, got {d:?}"));
            }
        }
        if self.pretrained.trim().is_empty() {
            return bad("pretrained", "must name a corpus or be `none`".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_from_toml() {
        let cfg: ModelConfig = toml::from_str(
            r#"
            backbone = "densenet169"
            version = "v3"
            task = "classification"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.head_widths, [256, 128]);
        assert_eq!(cfg.dropout, 0.3);
        assert_eq!(cfg.loss_weights, [1.0, 1.0]);
        assert_eq!(cfg.pretrained, "imagenet");
        assert!(cfg.trunk.is_full());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_backbone_names_the_field() {
        let err = toml::from_str::<ModelConfig>(
            "backbone = \"vgg16\"\nversion = \"v1\"\ntask = \"regression\"\n",
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("backbone"), "{err}");
        assert!(err.contains("vgg16"), "{err}");
    }

    #[test]
    fn validation_rules() {
        let mut cfg = ModelConfig::new(BackboneFamily::DenseNet121, FreezeVersion::V1, Task::Regression);
        cfg.loss_weights = [0.0, 0.0];
        assert!(matches!(cfg.validate(), Err(ModelError::Config { field: "loss_weights", .. })));
        cfg.loss_weights = [-1.0, 1.0];
        assert!(cfg.validate().is_err());
        cfg.loss_weights = [0.0, 1.0];
        cfg.validate().unwrap();
        cfg.dropout = 1.0;
        assert!(matches!(cfg.validate(), Err(ModelError::Config { field: "dropout", .. })));
        cfg.dropout = 0.0;
        cfg.head_widths = vec![];
        assert!(cfg.validate().is_err());
    }
}
