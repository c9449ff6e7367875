//! Layer graphs of the supported backbones.
//!
//! Layers are listed in the same order and under the same names as the
//! reference Keras applications (`include_top=False`, average pooling), so a
//! layer index here means the same thing as a layer index there. Pre-trained
//! weights are matched by these names.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{FreezeVersion, ModelError, Result, TrunkScale};
use crate::dataset::Preprocessing;

pub const BN_EPSILON: f64 = 1.001e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackboneFamily {
    ResNet50V2,
    DenseNet121,
    DenseNet169,
}

impl BackboneFamily {
    pub const ALL: [BackboneFamily; 3] = [
        BackboneFamily::ResNet50V2,
        BackboneFamily::DenseNet121,
        BackboneFamily::DenseNet169,
    ];

    pub fn key(self) -> &'static str {
        match self {
            BackboneFamily::ResNet50V2 => "resnet50v2",
            BackboneFamily::DenseNet121 => "densenet121",
            BackboneFamily::DenseNet169 => "densenet169",
        }
    }

    pub fn preprocessing(self) -> Preprocessing {
        match self {
            BackboneFamily::ResNet50V2 => Preprocessing::TfScale,
            BackboneFamily::DenseNet121 | BackboneFamily::DenseNet169 => Preprocessing::TorchImagenet,
        }
    }

    fn default_depths(self) -> [usize; 4] {
        match self {
            BackboneFamily::ResNet50V2 => [3, 4, 6, 3],
            BackboneFamily::DenseNet121 => [6, 12, 24, 16],
            BackboneFamily::DenseNet169 => [6, 12, 32, 32],
        }
    }

    pub fn graph(self, scale: &TrunkScale) -> LayerGraph {
        let depths = scale.depths.unwrap_or_else(|| self.default_depths());
        match self {
            BackboneFamily::ResNet50V2 => resnet_v2(depths, scale),
            BackboneFamily::DenseNet121 | BackboneFamily::DenseNet169 => densenet(depths, scale),
        }
    }
}

impl fmt::Display for BackboneFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for BackboneFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        BackboneFamily::ALL
            .into_iter()
            .find(|f| f.key() == norm)
            .ok_or_else(|| {
                format!("backbone: unknown family `{s}` (expected resnet50v2, densenet121 or densenet169)")
            })
    }
}

impl TryFrom<String> for BackboneFamily {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<BackboneFamily> for String {
    fn from(f: BackboneFamily) -> String {
        f.key().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Input,
    ZeroPad(usize),
    Conv {
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    BatchNorm,
    Relu,
    MaxPool {
        size: usize,
        stride: usize,
    },
    AvgPool {
        size: usize,
        stride: usize,
    },
    /// 1×1 max pooling with a stride, i.e. strided subsampling.
    Subsample(usize),
    Concat,
    Add,
    GlobalAvgPool,
}

impl LayerKind {
    pub fn has_params(self) -> bool {
        matches!(self, LayerKind::Conv { .. } | LayerKind::BatchNorm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<usize>,
    pub in_channels: usize,
    pub out_channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    pub layers: Vec<LayerSpec>,
}

/// Layer index ranges that the freeze strategies unfreeze.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockTable {
    pub last: Range<usize>,
    pub second_to_last: Range<usize>,
    /// Named landmark layers: the stem convolution and the first 3×3
    /// convolution of each of the four stages.
    pub anchors: Vec<(String, usize)>,
}

impl LayerGraph {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }

    fn prefix_range(&self, prefixes: &[&str]) -> Option<Range<usize>> {
        let hits: Vec<usize> = self
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| prefixes.iter().any(|p| l.name.starts_with(p)))
            .map(|(i, _)| i)
            .collect();
        let (&lo, &hi) = (hits.first()?, hits.last()?);
        (hi - lo + 1 == hits.len()).then_some(lo..hi + 1)
    }

    /// Last / second-to-last block ranges. A DenseNet block is paired with the
    /// transition layer feeding it; a ResNet stage owns its stride pooling.
    /// Post-activation layers go with the last block.
    pub fn block_table(&self, family: BackboneFamily) -> Option<BlockTable> {
        let (last, second, anchor_fmt): (&[&str], &[&str], fn(usize) -> String) = match family {
            BackboneFamily::ResNet50V2 => (
                &["conv5_", "post_", "avg_pool"],
                &["conv4_"],
                |i| format!("conv{}_block1_2_conv", i + 2),
            ),
            _ => (
                &["pool4_", "conv5_", "bn", "relu", "avg_pool"],
                &["pool3_", "conv4_"],
                |i| format!("conv{}_block1_2_conv", i + 2),
            ),
        };
        let last = self.prefix_range(last)?;
        let second_to_last = self.prefix_range(second)?;
        if second_to_last.end != last.start || last.end != self.len() {
            return None;
        }
        let stem = match family {
            BackboneFamily::ResNet50V2 => "conv1_conv",
            _ => "conv1/conv",
        };
        let mut anchors = vec![("Conv1".to_string(), self.index_of(stem)?)];
        let stage_label = match family {
            BackboneFamily::ResNet50V2 => "Conv",
            _ => "Dense",
        };
        for i in 0..4 {
            anchors.push((format!("{stage_label}{}", i + 1), self.index_of(&anchor_fmt(i))?));
        }
        Some(BlockTable {
            last,
            second_to_last,
            anchors,
        })
    }

    /// Per-layer trainable flags of the trunk under a freeze strategy.
    pub fn trainable_mask(&self, family: BackboneFamily, version: FreezeVersion) -> Result<Vec<bool>> {
        let table = self
            .block_table(family)
            .ok_or_else(|| ModelError::UndefinedBlocks {
                family: family.to_string(),
                version,
            })?;
        let range = match version {
            FreezeVersion::V1 => 0..0,
            FreezeVersion::V2 => table.last,
            FreezeVersion::V3 => table.second_to_last.start..table.last.end,
        };
        Ok((0..self.len()).map(|i| range.contains(&i)).collect())
    }
}

struct Builder {
    layers: Vec<LayerSpec>,
}

impl Builder {
    fn new() -> Self {
        Self {
            layers: vec![LayerSpec {
                name: "input_1".into(),
                kind: LayerKind::Input,
                inputs: vec![],
                in_channels: 3,
                out_channels: 3,
            }],
        }
    }

    fn channels(&self, i: usize) -> usize {
        self.layers[i].out_channels
    }

    fn push(&mut self, name: impl Into<String>, kind: LayerKind, inputs: Vec<usize>, out: usize) -> usize {
        let in_channels = inputs.first().map_or(0, |&i| self.channels(i));
        self.layers.push(LayerSpec {
            name: name.into(),
            kind,
            inputs,
            in_channels,
            out_channels: out,
        });
        self.layers.len() - 1
    }

    fn unary(&mut self, name: impl Into<String>, kind: LayerKind, x: usize) -> usize {
        let c = self.channels(x);
        self.push(name, kind, vec![x], c)
    }

    fn conv(&mut self, name: impl Into<String>, x: usize, filters: usize, kernel: usize, stride: usize, pad: usize, bias: bool) -> usize {
        self.push(name, LayerKind::Conv { kernel, stride, pad, bias }, vec![x], filters)
    }

    fn finish(mut self, x: usize) -> LayerGraph {
        let c = self.channels(x);
        self.push("avg_pool", LayerKind::GlobalAvgPool, vec![x], c);
        LayerGraph { layers: self.layers }
    }
}

fn densenet(depths: [usize; 4], scale: &TrunkScale) -> LayerGraph {
    let growth = scale.scaled(32);
    let mut b = Builder::new();
    let x = b.unary("zero_padding2d", LayerKind::ZeroPad(3), 0);
    let x = b.conv("conv1/conv", x, scale.scaled(64), 7, 2, 0, false);
    let x = b.unary("conv1/bn", LayerKind::BatchNorm, x);
    let x = b.unary("conv1/relu", LayerKind::Relu, x);
    let x = b.unary("zero_padding2d_1", LayerKind::ZeroPad(1), x);
    let mut x = b.unary("pool1", LayerKind::MaxPool { size: 3, stride: 2 }, x);

    for (stage, &blocks) in depths.iter().enumerate() {
        let s = stage + 2;
        for k in 1..=blocks {
            let name = format!("conv{s}_block{k}");
            let y = b.unary(format!("{name}_0_bn"), LayerKind::BatchNorm, x);
            let y = b.unary(format!("{name}_0_relu"), LayerKind::Relu, y);
            let y = b.conv(format!("{name}_1_conv"), y, 4 * growth, 1, 1, 0, false);
            let y = b.unary(format!("{name}_1_bn"), LayerKind::BatchNorm, y);
            let y = b.unary(format!("{name}_1_relu"), LayerKind::Relu, y);
            let y = b.conv(format!("{name}_2_conv"), y, growth, 3, 1, 1, false);
            let c = b.channels(x) + growth;
            x = b.push(format!("{name}_concat"), LayerKind::Concat, vec![x, y], c);
        }
        if stage < 3 {
            let name = format!("pool{s}");
            let y = b.unary(format!("{name}_bn"), LayerKind::BatchNorm, x);
            let y = b.unary(format!("{name}_relu"), LayerKind::Relu, y);
            let reduced = (b.channels(y) / 2).max(1);
            let y = b.conv(format!("{name}_conv"), y, reduced, 1, 1, 0, false);
            x = b.unary(format!("{name}_pool"), LayerKind::AvgPool { size: 2, stride: 2 }, y);
        }
    }
    let x = b.unary("bn", LayerKind::BatchNorm, x);
    let x = b.unary("relu", LayerKind::Relu, x);
    b.finish(x)
}

fn resnet_v2(depths: [usize; 4], scale: &TrunkScale) -> LayerGraph {
    let mut b = Builder::new();
    let x = b.unary("conv1_pad", LayerKind::ZeroPad(3), 0);
    let x = b.conv("conv1_conv", x, scale.scaled(64), 7, 2, 0, true);
    let x = b.unary("pool1_pad", LayerKind::ZeroPad(1), x);
    let mut x = b.unary("pool1_pool", LayerKind::MaxPool { size: 3, stride: 2 }, x);

    let filters = [64, 128, 256, 512];
    for (stage, &blocks) in depths.iter().enumerate() {
        let f = scale.scaled(filters[stage]);
        let last_stride = if stage == 3 { 1 } else { 2 };
        for k in 1..=blocks {
            let name = format!("conv{}_block{k}", stage + 2);
            let stride = if k == blocks { last_stride } else { 1 };
            let conv_shortcut = k == 1;
            let pre = b.unary(format!("{name}_preact_bn"), LayerKind::BatchNorm, x);
            let pre = b.unary(format!("{name}_preact_relu"), LayerKind::Relu, pre);
            let y = b.conv(format!("{name}_1_conv"), pre, f, 1, 1, 0, false);
            let y = b.unary(format!("{name}_1_bn"), LayerKind::BatchNorm, y);
            let y = b.unary(format!("{name}_1_relu"), LayerKind::Relu, y);
            let y = b.unary(format!("{name}_2_pad"), LayerKind::ZeroPad(1), y);
            let y = b.conv(format!("{name}_2_conv"), y, f, 3, stride, 0, false);
            let y = b.unary(format!("{name}_2_bn"), LayerKind::BatchNorm, y);
            let y = b.unary(format!("{name}_2_relu"), LayerKind::Relu, y);
            let shortcut = if conv_shortcut {
                b.conv(format!("{name}_0_conv"), pre, 4 * f, 1, stride, 0, true)
            } else if stride > 1 {
                b.unary(format!("{name}_0_pool"), LayerKind::Subsample(stride), x)
            } else {
                x
            };
            let y = b.conv(format!("{name}_3_conv"), y, 4 * f, 1, 1, 0, true);
            x = b.push(format!("{name}_out"), LayerKind::Add, vec![shortcut, y], 4 * f);
        }
    }
    let x = b.unary("post_bn", LayerKind::BatchNorm, x);
    let x = b.unary("post_relu", LayerKind::Relu, x);
    b.finish(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(f: BackboneFamily) -> LayerGraph {
        f.graph(&TrunkScale::default())
    }

    #[test]
    fn keras_layer_counts() {
        // include_top=False plus the average pooling layer
        assert_eq!(full(BackboneFamily::DenseNet121).len(), 427 + 1);
        assert_eq!(full(BackboneFamily::DenseNet169).len(), 595 + 1);
        assert_eq!(full(BackboneFamily::ResNet50V2).len(), 190 + 1);
    }

    #[test]
    fn densenet169_anchor_layers() {
        let g = full(BackboneFamily::DenseNet169);
        let t = g.block_table(BackboneFamily::DenseNet169).unwrap();
        let idx: Vec<usize> = t.anchors.iter().map(|a| a.1).collect();
        assert_eq!(idx, [2, 12, 58, 146, 374]);
        assert_eq!(t.anchors[0].0, "Conv1");
        assert_eq!(t.anchors[4].0, "Dense4");
    }

    #[test]
    fn output_channels() {
        assert_eq!(full(BackboneFamily::DenseNet121).output_channels(), 1024);
        assert_eq!(full(BackboneFamily::DenseNet169).output_channels(), 1664);
        assert_eq!(full(BackboneFamily::ResNet50V2).output_channels(), 2048);
    }

    #[test]
    fn densenet121_v2_unfreezes_block4_and_transition() {
        let g = full(BackboneFamily::DenseNet121);
        let mask = g.trainable_mask(BackboneFamily::DenseNet121, FreezeVersion::V2).unwrap();
        let first = mask.iter().position(|&t| t).unwrap();
        assert_eq!(g.layers[first].name, "pool4_bn");
        assert!(mask[first..].iter().all(|&t| t));
        for (l, &t) in g.layers.iter().zip(&mask) {
            if l.name.starts_with("conv5_") || l.name.starts_with("pool4_") {
                assert!(t, "{}", l.name);
            }
            if l.name.starts_with("conv4_") || l.name.starts_with("pool3_") {
                assert!(!t, "{}", l.name);
            }
        }
    }

    #[test]
    fn resnet_v3_unfreezes_conv4_and_conv5() {
        let g = full(BackboneFamily::ResNet50V2);
        let mask = g.trainable_mask(BackboneFamily::ResNet50V2, FreezeVersion::V3).unwrap();
        for (l, &t) in g.layers.iter().zip(&mask) {
            let expect = l.name.starts_with("conv4_")
                || l.name.starts_with("conv5_")
                || l.name.starts_with("post_")
                || l.name == "avg_pool";
            assert_eq!(t, expect, "{}", l.name);
        }
    }

    #[test]
    fn v1_freezes_everything() {
        for f in BackboneFamily::ALL {
            let g = f.graph(&TrunkScale::tiny());
            assert!(g.trainable_mask(f, FreezeVersion::V1).unwrap().iter().all(|&t| !t));
        }
    }

    #[test]
    fn block_ranges_within_layer_count() {
        for f in BackboneFamily::ALL {
            for scale in [TrunkScale::default(), TrunkScale::tiny()] {
                let g = f.graph(&scale);
                let t = g.block_table(f).unwrap();
                assert!(t.second_to_last.start < t.last.start);
                assert_eq!(t.last.end, g.len());
                assert!(t.anchors.iter().all(|a| a.1 < g.len()));
            }
        }
    }

    #[test]
    fn family_parsing() {
        assert_eq!("DenseNet-169".parse::<BackboneFamily>().unwrap(), BackboneFamily::DenseNet169);
        assert_eq!("ResNet50V2".parse::<BackboneFamily>().unwrap(), BackboneFamily::ResNet50V2);
        assert!("vgg16".parse::<BackboneFamily>().unwrap_err().contains("backbone"));
    }
}
