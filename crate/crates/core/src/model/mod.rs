//! Multi-task networks: a pre-trained convolutional trunk shared by a
//! Democrat head and a Republican head.

mod backbone;
mod config;
mod net;
mod ops;
mod params;

use std::path::PathBuf;

use thiserror::Error;

pub use backbone::{BackboneFamily, BlockTable, LayerGraph, LayerKind, LayerSpec};
pub use config::{BackboneSpec, FreezeVersion, ModelConfig, Precision, Task, TrunkScale};
pub use net::{
    apply_freeze_strategy, build_model, build_untrained, pretrained_path, Mode, ModelHandle,
    NetOutput, StatUpdate,
};
pub use ops::{
    cross_entropy_with_logits, log_softmax_rows, mse_loss, multitask_loss, multitask_loss_tensor,
    softmax, softmax_rows,
};
pub(crate) use ops::scalar;
pub use params::{HeadId, Owner, Param, ParamRole, ParamStore};

/// Environment variable naming the directory that holds pre-trained trunk weights.
pub const CACHE_DIR_ENV: &str = "POLYVIEW_CACHE_DIR";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {field}: {message}")]
    Config { field: &'static str, message: String },
    #[error(
        "pre-trained weights for {family} ({source_id}) not found at {path}; \
         place a safetensors export there or set {CACHE_DIR_ENV}"
    )]
    MissingWeights {
        family: String,
        source_id: String,
        path: PathBuf,
    },
    #[error("weights file {path}: {message}")]
    BadWeights { path: PathBuf, message: String },
    #[error("no block table for {family} under {version:?}")]
    UndefinedBlocks {
        family: String,
        version: FreezeVersion,
    },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("empty input")]
    Empty,
    #[error("loss must be non-negative, got {0}")]
    NegativeLoss(f64),
    #[error("loss weight must be non-negative and finite, got {0}")]
    BadWeight(f64),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
