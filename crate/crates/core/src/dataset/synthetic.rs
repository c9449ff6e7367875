//! Colour-separable synthetic corpus used for training sanity checks.
//!
//! Each image is dominated by one colour channel: red images are labelled
//! negative by the Dem group, green neutral, blue positive. The Rep group
//! labels are a different deterministic function of the same colour.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ImageRecord, LabeledExample, Preprocessing, Result};
use crate::labels::{export_labels, Category, GroupLabel, ImageLabelSet, Variable};

pub const FIXTURE_SIDE: u32 = 96;
pub const RATERS: usize = 3;

/// (Dem AES, Rep AES) for a dominant channel index.
pub const TARGETS: [(f64, f64); 3] = [(2.0, 1.5), (4.0, 3.0), (6.0, 4.5)];

#[derive(Debug, Clone)]
pub struct ColorItem {
    pub image_id: String,
    pub channel: usize,
    pub image: RgbImage,
    pub labels: ImageLabelSet,
}

impl ColorItem {
    pub fn dem_category(&self) -> Category {
        Category::ALL[self.channel]
    }
}

fn labels_for(image_id: &str, channel: usize) -> ImageLabelSet {
    let (dem, rep) = TARGETS[channel];
    let mut set = ImageLabelSet::new(image_id);
    for v in Variable::ALL {
        let l = set.variable_mut(v);
        let (d, r) = match v {
            Variable::Sentiment | Variable::SubjectOfHarm => (dem, rep),
            Variable::ObjectOfHarm | Variable::Accuracy => (4.0, 4.0),
        };
        l.dem = Some(GroupLabel::from_aes(d, RATERS).expect("on scale"));
        l.rep = Some(GroupLabel::from_aes(r, RATERS).expect("on scale"));
        l.all = Some(GroupLabel::from_aes((d + r) / 2.0, 2 * RATERS).expect("on scale"));
    }
    set
}

/// `n` noisy single-colour images; channel `i % 3` dominates image `i`.
pub fn color_fixture(n: usize, seed: u64) -> Vec<ColorItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let channel = i % 3;
            let image = RgbImage::from_fn(FIXTURE_SIDE, FIXTURE_SIDE, |_, _| {
                let mut px = [0u8; 3];
                for (c, v) in px.iter_mut().enumerate() {
                    *v = if c == channel {
                        rng.gen_range(170..=230)
                    } else {
                        rng.gen_range(30..=90)
                    };
                }
                Rgb(px)
            });
            let image_id = format!("syn_{i:03}");
            let labels = labels_for(&image_id, channel);
            ColorItem {
                image_id,
                channel,
                image,
                labels,
            }
        })
        .collect()
}

pub fn color_fixture_examples(
    n: usize,
    seed: u64,
    variable: Variable,
    preprocessing: Preprocessing,
) -> Vec<LabeledExample> {
    color_fixture(n, seed)
        .into_iter()
        .map(|item| {
            let image = ImageRecord::from_rgb(
                item.image_id.clone(),
                &item.image,
                PathBuf::from(format!("{}.png", item.image_id)),
                preprocessing,
            );
            let (dem, rep) = item.labels.variable(variable).pair().expect("both groups");
            LabeledExample {
                image,
                target_dem: dem,
                target_rep: rep,
                variable,
            }
        })
        .collect()
}

/// Writes `<dir>/images/<id>.png` and `<dir>/labels.json`; returns (labels, images dir).
pub fn write_color_fixture(dir: &Path, n: usize, seed: u64) -> Result<(PathBuf, PathBuf)> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images)?;
    let items = color_fixture(n, seed);
    for item in &items {
        item.image
            .save(images.join(format!("{}.png", item.image_id)))
            .map_err(|e| super::DatasetError::Decode {
                path: images.clone(),
                reason: e.to_string(),
            })?;
    }
    let sets: Vec<ImageLabelSet> = items.into_iter().map(|i| i.labels).collect();
    let labels = dir.join("labels.json");
    export_labels(&sets, &labels)?;
    Ok((labels, images))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_images;

    #[test]
    fn dominant_channel_matches_class() {
        for item in color_fixture(9, 1) {
            let mut sums = [0u64; 3];
            for p in item.image.pixels() {
                for c in 0..3 {
                    sums[c] += p.0[c] as u64;
                }
            }
            let arg = (0..3).max_by_key(|&c| sums[c]).unwrap();
            assert_eq!(arg, item.channel);
            assert_eq!(
                item.labels.label(Variable::Sentiment, crate::labels::Group::Dem).unwrap().category,
                item.dem_category()
            );
        }
    }

    #[test]
    fn written_fixture_loads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let (labels, images) = write_color_fixture(dir.path(), 6, 3).unwrap();
        let loaded = load_images(&images, &labels, Variable::Sentiment, Preprocessing::TfScale).unwrap();
        let direct = color_fixture_examples(6, 3, Variable::Sentiment, Preprocessing::TfScale);
        assert!(loaded.manifest.is_empty());
        assert_eq!(loaded.examples.len(), 6);
        for (a, b) in loaded.examples.iter().zip(&direct) {
            assert_eq!(a.image.pixels, b.image.pixels);
            assert_eq!(a.target_dem, b.target_dem);
            assert_eq!(a.target_rep, b.target_rep);
        }
    }
}
