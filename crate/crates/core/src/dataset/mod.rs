//! Image corpus handling: decoding, 224×224 preprocessing, pairing with
//! group labels, train/validation splits and fold plans.

mod load;
mod split;
pub mod synthetic;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use candle_core::{Device, Tensor};
use image::imageops::FilterType;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{GroupLabel, Variable};

pub use load::{load_images, load_images_from_sets, LoadedDataset, ManifestEntry, SkipReason};
pub use split::{make_folds, make_split, DatasetSplit, FoldPlan};

pub const IMAGE_SIZE: usize = 224;
pub const CHANNELS: usize = 3;
pub const PIXELS_PER_IMAGE: usize = IMAGE_SIZE * IMAGE_SIZE * CHANNELS;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("split needs at least 5 examples, got {0}")]
    TooFewForSplit(usize),
    #[error("cannot make {k} folds from {n} examples (need k >= 2 and n >= k)")]
    BadFolds { n: usize, k: usize },
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("no usable examples after pairing images with labels")]
    NoExamples,
    #[error(transparent)]
    Labels(#[from] crate::labels::LabelError),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// Pixel normalisation matching a backbone's pre-training convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preprocessing {
    /// `x / 127.5 - 1`, the ResNet-v2 convention.
    TfScale,
    /// `(x / 255 - mean) / std` with ImageNet channel statistics, the DenseNet convention.
    TorchImagenet,
}

const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

impl Preprocessing {
    pub fn id(self) -> &'static str {
        match self {
            Preprocessing::TfScale => "tf-scale",
            Preprocessing::TorchImagenet => "torch-imagenet",
        }
    }

    fn normalize(self, channel: usize, value: u8) -> f32 {
        let x = value as f32;
        match self {
            Preprocessing::TfScale => x / 127.5 - 1.0,
            Preprocessing::TorchImagenet => {
                (x / 255.0 - IMAGENET_MEAN[channel]) / IMAGENET_STD[channel]
            }
        }
    }
}

impl fmt::Display for Preprocessing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Preprocessing {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "tf-scale" => Ok(Preprocessing::TfScale),
            "torch-imagenet" => Ok(Preprocessing::TorchImagenet),
            _ => Err(format!("unknown preprocessing `{s}`")),
        }
    }
}

/// A preprocessed 224×224×3 image in HWC order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub pixels: Vec<f32>,
    pub source: PathBuf,
    pub preprocessing: Preprocessing,
}

impl ImageRecord {
    pub fn from_rgb(
        image_id: impl Into<String>,
        img: &RgbImage,
        source: PathBuf,
        preprocessing: Preprocessing,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            pixels: preprocess_rgb(img, preprocessing),
            source,
            preprocessing,
        }
    }

    /// Decodes any PNG/JPEG; grayscale and alpha sources end up as 3-channel RGB.
    pub fn open(
        image_id: impl Into<String>,
        path: impl Into<PathBuf>,
        preprocessing: Preprocessing,
    ) -> Result<Self> {
        let path = path.into();
        let img = image::open(&path).map_err(|e| DatasetError::Decode {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        Ok(Self::from_rgb(image_id, &img.to_rgb8(), path, preprocessing))
    }

    pub fn shape(&self) -> [usize; 3] {
        [IMAGE_SIZE, IMAGE_SIZE, CHANNELS]
    }
}

/// Bilinear resize to 224×224 (aspect ratio not preserved), then normalise.
pub fn preprocess_rgb(img: &RgbImage, preprocessing: Preprocessing) -> Vec<f32> {
    let size = IMAGE_SIZE as u32;
    let resized;
    let img = if img.dimensions() == (size, size) {
        img
    } else {
        resized = image::imageops::resize(img, size, size, FilterType::Triangle);
        &resized
    };
    img.as_raw()
        .iter()
        .enumerate()
        .map(|(i, &v)| preprocessing.normalize(i % CHANNELS, v))
        .collect()
}

/// Stacks images into an `(N, 224, 224, 3)` f32 tensor.
pub fn batch_tensor<'a>(
    images: impl IntoIterator<Item = &'a ImageRecord>,
    device: &Device,
) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut n = 0;
    for img in images {
        data.extend_from_slice(&img.pixels);
        n += 1;
    }
    Ok(Tensor::from_vec(
        data,
        (n, IMAGE_SIZE, IMAGE_SIZE, CHANNELS),
        device,
    )?)
}

/// An image paired with its Dem and Rep targets for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub image: ImageRecord,
    pub target_dem: GroupLabel,
    pub target_rep: GroupLabel,
    pub variable: Variable,
}

impl LabeledExample {
    pub fn image_id(&self) -> &str {
        &self.image.image_id
    }
}
