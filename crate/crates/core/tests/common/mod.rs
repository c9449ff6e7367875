#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use candle_core::DType;
use polyview::labels::Category;
use polyview::model::{ModelHandle, Owner};

/// Brute-force reference evaluators, written from the metric definitions
/// without sharing code with the library.
pub mod oracle {
    use super::Category;

    pub fn mae(y: &[f64], y_hat: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..y.len() {
            let d = y[i] - y_hat[i];
            total += if d < 0.0 { -d } else { d };
        }
        total / y.len() as f64
    }

    pub fn mse(y: &[f64], y_hat: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..y.len() {
            total += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
        }
        total / y.len() as f64
    }

    /// (precision, recall, f1) of one class, zero where a ratio is undefined.
    pub fn class_scores(truth: &[Category], pred: &[Category], class: Category) -> (f64, f64, f64) {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (t, p) in truth.iter().zip(pred) {
            match (*t == class, *p == class) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        (precision, recall, f1)
    }

    pub fn weighted_f1(truth: &[Category], pred: &[Category]) -> f64 {
        let n = truth.len() as f64;
        let mut total = 0.0;
        for class in Category::ALL {
            let support = truth.iter().filter(|&&t| t == class).count() as f64;
            total += support / n * class_scores(truth, pred, class).2;
        }
        total
    }

    pub fn accuracy(truth: &[Category], pred: &[Category]) -> f64 {
        let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
        hits as f64 / truth.len() as f64
    }

    /// Epoch (1-based) at which a patience rule halts, read off the
    /// positions of strict running minima.
    pub fn stopping_epoch(losses: &[f64], patience: usize, cap: usize) -> usize {
        let horizon = losses.len().min(cap);
        let mut improvements = Vec::new();
        let mut best = f64::INFINITY;
        for (i, &l) in losses[..horizon].iter().enumerate() {
            if l < best {
                best = l;
                improvements.push(i);
            }
        }
        improvements.push(usize::MAX);
        for w in improvements.windows(2) {
            let (last, next) = (w[0], w[1]);
            if next == usize::MAX || next > last + patience {
                return (1 + last + patience).min(horizon);
            }
        }
        horizon
    }
}

/// Every parameter as raw f32 bit patterns, keyed by name.
pub fn param_bits(model: &ModelHandle) -> Vec<(String, Owner, Vec<u32>)> {
    model
        .params()
        .iter()
        .map(|p| {
            let v: Vec<f32> = p
                .var
                .as_tensor()
                .flatten_all()
                .and_then(|t| t.to_dtype(DType::F32))
                .and_then(|t| t.to_vec1())
                .expect("readable parameter");
            (p.name.clone(), p.owner, v.into_iter().map(f32::to_bits).collect())
        })
        .collect()
}

/// Names (and owners) of the parameters whose bits differ between snapshots.
pub fn changed(
    before: &[(String, Owner, Vec<u32>)],
    after: &[(String, Owner, Vec<u32>)],
) -> Vec<(String, Owner)> {
    before
        .iter()
        .zip(after)
        .filter(|(a, b)| a.2 != b.2)
        .map(|(a, _)| (a.0.clone(), a.1))
        .collect()
}

/// Writes a run config for the colour fixture and returns its path.
pub fn write_run_config(dir: &Path, labels: &Path, images: &Path, run_dir: &Path, model: &str, training: &str) -> PathBuf {
    let text = format!(
        "labels = {labels:?}\nimages = {images:?}\nrun_dir = {run_dir:?}\n\n[model]\n{model}\n\n[training]\n{training}\n",
        labels = labels.display().to_string(),
        images = images.display().to_string(),
        run_dir = run_dir.display().to_string(),
    );
    fs::create_dir_all(dir).unwrap();
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

/// `[model]` body for a small randomly initialised trunk.
pub fn tiny_model_toml(backbone: &str, version: &str, task: &str) -> String {
    format!(
        "backbone = \"{backbone}\"\nversion = \"{version}\"\ntask = \"{task}\"\npretrained = \"none\"\n\
         trunk = {{ width = 0.125, depths = [1, 1, 1, 1] }}"
    )
}
