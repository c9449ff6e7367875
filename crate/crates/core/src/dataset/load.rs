use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{DatasetError, ImageRecord, LabeledExample, Preprocessing, Result};
use crate::labels::{import_labels, ImageLabelSet, Variable};

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    MissingFile,
    Undecodable(String),
    MissingDemLabel,
    MissingRepLabel,
    Unlabeled,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::MissingFile => f.write_str("missing-file"),
            SkipReason::Undecodable(r) => write!(f, "undecodable: {}", r.replace(['\t', '\n'], " ")),
            SkipReason::MissingDemLabel => f.write_str("missing-dem-label"),
            SkipReason::MissingRepLabel => f.write_str("missing-rep-label"),
            SkipReason::Unlabeled => f.write_str("unlabeled"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub path: Option<PathBuf>,
    pub reason: SkipReason,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    /// Sorted by image id.
    pub examples: Vec<LabeledExample>,
    /// Everything that was skipped or excluded, sorted by image id.
    pub manifest: Vec<ManifestEntry>,
}

impl LoadedDataset {
    /// Line-oriented manifest: `image_id<TAB>reason<TAB>path`.
    pub fn manifest_text(&self) -> String {
        self.manifest
            .iter()
            .map(|e| {
                let path = e
                    .path
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "-".into());
                format!("{}\t{}\t{}\n", e.image_id, e.reason, path)
            })
            .collect()
    }
}

fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    for path in entries {
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)));
        if !ext_ok {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.entry(stem.to_string()).or_insert(path);
        }
    }
    Ok(out)
}

/// Pairs `<dir>/<image_id>.<png|jpg|jpeg>` files with the labels in `label_file`.
pub fn load_images(
    dir: impl AsRef<Path>,
    label_file: impl AsRef<Path>,
    variable: Variable,
    preprocessing: Preprocessing,
) -> Result<LoadedDataset> {
    let sets = import_labels(label_file)?;
    load_images_from_sets(dir, &sets, variable, preprocessing)
}

/// Images lacking either group label, lacking a file or failing to decode are
/// skipped and listed in the manifest, never fatal.
pub fn load_images_from_sets(
    dir: impl AsRef<Path>,
    sets: &[ImageLabelSet],
    variable: Variable,
    preprocessing: Preprocessing,
) -> Result<LoadedDataset> {
    let mut files = image_files(dir.as_ref())?;
    let mut sorted: Vec<&ImageLabelSet> = sets.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let mut manifest = Vec::new();
    let mut candidates = Vec::new();
    for set in sorted {
        let path = files.remove(&set.image_id);
        let labels = set.variable(variable);
        let reason = match (&path, labels.dem, labels.rep) {
            (_, None, _) => Some(SkipReason::MissingDemLabel),
            (_, _, None) => Some(SkipReason::MissingRepLabel),
            (None, _, _) => Some(SkipReason::MissingFile),
            _ => None,
        };
        match (reason, path, labels.pair()) {
            (None, Some(path), Some((dem, rep))) => candidates.push((set.image_id.clone(), path, dem, rep)),
            (reason, path, _) => manifest.push(ManifestEntry {
                image_id: set.image_id.clone(),
                path,
                reason: reason.unwrap_or(SkipReason::MissingFile),
            }),
        }
    }
    for (image_id, path) in files {
        manifest.push(ManifestEntry {
            image_id,
            path: Some(path),
            reason: SkipReason::Unlabeled,
        });
    }

    let decoded: Vec<_> = candidates
        .into_par_iter()
        .map(|(id, path, dem, rep)| {
            let rec = ImageRecord::open(id.clone(), path.clone(), preprocessing);
            (id, path, dem, rep, rec)
        })
        .collect();

    let mut examples = Vec::with_capacity(decoded.len());
    for (image_id, path, dem, rep, rec) in decoded {
        match rec {
            Ok(image) => examples.push(LabeledExample {
                image,
                target_dem: dem,
                target_rep: rep,
                variable,
            }),
            Err(DatasetError::Decode { reason, .. }) => {
                log::warn!("skipping {}: {reason}", path.display());
                manifest.push(ManifestEntry {
                    image_id,
                    path: Some(path),
                    reason: SkipReason::Undecodable(reason),
                });
            }
            Err(e) => return Err(e),
        }
    }
    manifest.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(LoadedDataset { examples, manifest })
}
