use candle_core::{DType, Tensor};
use serde_json::{json, Map, Value};

use super::{Checkpoint, Result, TrainError};
use crate::dataset::{batch_tensor, ImageRecord, Preprocessing};
use crate::eval::polarization_index;
use crate::labels::{bin_aes, Category, Variable, SCALE_MAX, SCALE_MIN};
use crate::model::{softmax, Mode, ModelHandle, Task};

const BATCH: usize = 32;

/// Output of one head for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadPrediction {
    pub category: Category,
    /// Class probabilities (classification only).
    pub probabilities: Option<[f64; 3]>,
    /// Score clipped to the rating scale (regression only).
    pub score: Option<f64>,
}

impl HeadPrediction {
    pub(crate) fn decode(task: Task, raw: &[f64]) -> Result<Self> {
        match task {
            Task::Classification => {
                let p = softmax(raw)?;
                let probabilities = [p[0], p[1], p[2]];
                let mut best = 0;
                for i in 1..3 {
                    if probabilities[i] > probabilities[best] {
                        best = i;
                    }
                }
                Ok(Self {
                    category: Category::ALL[best],
                    probabilities: Some(probabilities),
                    score: None,
                })
            }
            Task::Regression => {
                if !raw[0].is_finite() {
                    return Err(crate::model::ModelError::NonFinite.into());
                }
                let score = raw[0].clamp(SCALE_MIN, SCALE_MAX);
                Ok(Self {
                    category: bin_aes(score).expect("clipped onto the scale"),
                    probabilities: None,
                    score: Some(score),
                })
            }
        }
    }

    /// Position on the rating scale: the score itself, or for a class
    /// prediction the midpoint of the class's bin.
    pub fn scale_value(&self) -> f64 {
        self.score.unwrap_or(match self.category {
            Category::Negative => 2.0,
            Category::Neutral => 4.0,
            Category::Positive => 6.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedPrediction {
    pub image_id: String,
    pub dem: HeadPrediction,
    pub rep: HeadPrediction,
}

impl PairedPrediction {
    pub fn polarization(&self) -> f64 {
        polarization_index(self.dem.scale_value(), self.rep.scale_value())
            .expect("head outputs lie on the scale")
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("image_id".into(), json!(self.image_id));
        for (prefix, head) in [("dem", &self.dem), ("rep", &self.rep)] {
            m.insert(format!("{prefix}_label"), json!(head.category.key()));
            if let Some(s) = head.score {
                m.insert(format!("{prefix}_score"), json!(s));
            }
            if let Some(p) = head.probabilities {
                m.insert(format!("{prefix}_probabilities"), json!(p));
            }
        }
        m.insert("polarization".into(), json!(self.polarization()));
        Value::Object(m)
    }
}

/// Raw head outputs, one row per input image, in model dtype converted to f64.
pub(crate) fn head_rows(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    Ok(t.to_dtype(DType::F64)?.to_vec2::<f64>()?)
}

/// A checkpoint's network ready for inference.
pub struct Predictor {
    model: ModelHandle,
    preprocessing: Preprocessing,
    variable: Variable,
}

impl Predictor {
    pub fn new(model: ModelHandle, preprocessing: Preprocessing, variable: Variable) -> Self {
        Self {
            model,
            preprocessing,
            variable,
        }
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        Ok(Self {
            model: checkpoint.build_model()?,
            preprocessing: checkpoint.preprocessing,
            variable: checkpoint.variable,
        })
    }

    pub fn model(&self) -> &ModelHandle {
        &self.model
    }

    pub fn variable(&self) -> Variable {
        self.variable
    }

    pub fn preprocessing(&self) -> Preprocessing {
        self.preprocessing
    }

    pub fn predict(&self, images: &[ImageRecord]) -> Result<Vec<PairedPrediction>> {
        if images.is_empty() {
            return Err(TrainError::EmptySet("image"));
        }
        if let Some(img) = images.iter().find(|i| i.preprocessing != self.preprocessing) {
            return Err(TrainError::PreprocessingMismatch {
                expected: self.preprocessing,
                found: img.preprocessing,
            });
        }
        let task = self.model.task();
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(BATCH) {
            let x = batch_tensor(chunk, self.model.device())?;
            let net = self.model.forward(&x, Mode::Eval)?;
            let (dem, rep) = (head_rows(&net.dem)?, head_rows(&net.rep)?);
            for ((img, d), r) in chunk.iter().zip(dem).zip(rep) {
                out.push(PairedPrediction {
                    image_id: img.image_id.clone(),
                    dem: HeadPrediction::decode(task, &d)?,
                    rep: HeadPrediction::decode(task, &r)?,
                });
            }
        }
        Ok(out)
    }
}

/// Per-image paired outputs of a checkpoint.
pub fn predict(checkpoint: &Checkpoint, images: &[ImageRecord]) -> Result<Vec<PairedPrediction>> {
    Predictor::from_checkpoint(checkpoint)?.predict(images)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_category() {
        let logits = [0.1f64.ln(), 0.2f64.ln(), 0.7f64.ln()];
        let h = HeadPrediction::decode(Task::Classification, &logits).unwrap();
        assert_eq!(h.category, Category::Positive);
        let p = h.probabilities.unwrap();
        assert!((p[2] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn regression_clip_and_bin() {
        let h = HeadPrediction::decode(Task::Regression, &[8.3]).unwrap();
        assert_eq!(h.score, Some(7.0));
        assert_eq!(h.category, Category::Positive);
        let h = HeadPrediction::decode(Task::Regression, &[-2.0]).unwrap();
        assert_eq!(h.score, Some(1.0));
        assert_eq!(h.category, Category::Negative);
    }

    #[test]
    fn split_pair_is_representable() {
        let p = PairedPrediction {
            image_id: "a".into(),
            dem: HeadPrediction::decode(Task::Classification, &[0.0, 3.0, 0.0]).unwrap(),
            rep: HeadPrediction::decode(Task::Classification, &[3.0, 0.0, 0.0]).unwrap(),
        };
        assert_eq!((p.dem.category, p.rep.category), (Category::Neutral, Category::Negative));
        assert_eq!(p.polarization(), 2.0);
    }

    #[test]
    fn regression_record_polarization() {
        let p = PairedPrediction {
            image_id: "b".into(),
            dem: HeadPrediction::decode(Task::Regression, &[6.0]).unwrap(),
            rep: HeadPrediction::decode(Task::Regression, &[2.0]).unwrap(),
        };
        let v = p.to_json();
        assert_eq!(v["polarization"], json!(4.0));
        assert_eq!(v["dem_label"], json!("positive"));
        assert_eq!(v["rep_label"], json!("negative"));
    }
}
