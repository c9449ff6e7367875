use std::collections::BTreeMap;

use serde::Serialize;

use super::{Group, ImageLabelSet, LabelError, Result, Variable, SCALE_MAX, SCALE_MIN};

const HIST_BINS: usize = 24;
const DENSITY_POINTS: usize = 121;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges over [1, 7]; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn build(values: &[f64]) -> Self {
        let width = (SCALE_MAX - SCALE_MIN) / HIST_BINS as f64;
        let edges = (0..=HIST_BINS)
            .map(|i| SCALE_MIN + i as f64 * width)
            .collect();
        let mut counts = vec![0; HIST_BINS];
        for &v in values {
            let i = (((v - SCALE_MIN) / width).floor() as usize).min(HIST_BINS - 1);
            counts[i] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Smoothed distribution of image-level AES values.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityEstimate {
    /// Gaussian kernel estimate sampled on an even grid over [1, 7].
    Kde {
        bandwidth: f64,
        grid: Vec<f64>,
        values: Vec<f64>,
    },
    /// Every value is identical.
    PointMass { location: f64 },
    Empty,
}

impl DensityEstimate {
    fn build(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return DensityEstimate::Empty;
        }
        let first = values[0];
        if values.iter().all(|&v| v == first) {
            return DensityEstimate::PointMass { location: first };
        }
        let bandwidth = silverman_bandwidth(values);
        let step = (SCALE_MAX - SCALE_MIN) / (DENSITY_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..DENSITY_POINTS)
            .map(|i| SCALE_MIN + i as f64 * step)
            .collect();
        let norm = 1.0 / (n as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
        let values = grid
            .iter()
            .map(|&x| {
                values
                    .iter()
                    .map(|&v| (-0.5 * ((x - v) / bandwidth).powi(2)).exp())
                    .sum::<f64>()
                    * norm
            })
            .collect();
        DensityEstimate::Kde {
            bandwidth,
            grid,
            values,
        }
    }
}

// 0.9 * min(sd, IQR / 1.34) * n^(-1/5), falling back to sd when the IQR is zero.
fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDistribution {
    pub n_images: usize,
    pub mean_aes: f64,
    pub histogram: Histogram,
    pub density: DensityEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableGap {
    /// Mean of |AES_dem - AES_rep| over images rated by both groups;
    /// `None` when no image has both.
    pub mean_abs_gap: Option<f64>,
    pub max_abs_gap: Option<f64>,
    pub images_compared: usize,
    /// Images lacking a Dem or a Rep label, excluded from the gap statistics.
    pub images_missing_group: usize,
    /// Images whose Dem and Rep categories differ.
    pub category_disagreements: usize,
    pub distributions: BTreeMap<Group, GroupDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub n_images: usize,
    pub variables: BTreeMap<Variable, VariableGap>,
}

impl GapReport {
    /// Fixed-width summary, one row per variable.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>10} {:>10} {:>9} {:>8} {:>12}\n",
            "variable", "mean_gap", "max_gap", "compared", "missing", "disagreeing"
        );
        let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        for (v, g) in &self.variables {
            out.push_str(&format!(
                "{:<16} {:>10} {:>10} {:>9} {:>8} {:>12}\n",
                v.title(),
                cell(g.mean_abs_gap),
                cell(g.max_abs_gap),
                g.images_compared,
                g.images_missing_group,
                g.category_disagreements
            ));
        }
        out
    }
}

/// Dem-vs-Rep divergence per variable plus per-group AES distributions.
pub fn compute_group_gap(labelsets: &[ImageLabelSet]) -> Result<GapReport> {
    if labelsets.is_empty() {
        return Err(LabelError::EmptyInput);
    }
    let mut variables = BTreeMap::new();
    for v in Variable::ALL {
        variables.insert(v, variable_gap(labelsets, v)?);
    }
    Ok(GapReport {
        n_images: labelsets.len(),
        variables,
    })
}

fn variable_gap(labelsets: &[ImageLabelSet], variable: Variable) -> Result<VariableGap> {
    let mut gaps = Vec::new();
    let mut disagreements = 0;
    let mut missing = 0;
    for set in labelsets {
        match set.variable(variable).pair() {
            Some((dem, rep)) => {
                gaps.push((dem.aes - rep.aes).abs());
                if dem.category != rep.category {
                    disagreements += 1;
                }
            }
            None => missing += 1,
        }
    }
    let mut distributions = BTreeMap::new();
    for group in Group::ALL {
        let values: Vec<f64> = labelsets
            .iter()
            .filter_map(|s| s.label(variable, group).map(|l| l.aes))
            .collect();
        let mean_aes = if values.is_empty() {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        distributions.insert(
            group,
            GroupDistribution {
                n_images: values.len(),
                mean_aes,
                histogram: Histogram::build(&values),
                density: DensityEstimate::build(&values),
            },
        );
    }

    Ok(VariableGap {
        mean_abs_gap: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
        max_abs_gap: (!gaps.is_empty()).then(|| gaps.iter().copied().fold(0.0, f64::max)),
        images_compared: gaps.len(),
        images_missing_group: missing,
        category_disagreements: disagreements,
        distributions,
    })
}
