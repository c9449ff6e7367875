use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backbone::BN_EPSILON;
use super::params::Init;
use super::{
    softmax_rows, FreezeVersion, HeadId, LayerGraph, LayerKind, ModelConfig, ModelError, Owner,
    ParamRole, ParamStore, Result, Task, CACHE_DIR_ENV,
};
use crate::dataset::Preprocessing;

const BN_MOMENTUM: f64 = 0.99;
const HEAD_BN_MOMENTUM: f64 = 0.9;
const HEAD_BN_EPSILON: f64 = 1e-3;

/// Forward-pass mode. Training mode uses batch statistics in trainable
/// normalisation layers, applies dropout, and tracks gradients.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// New value for a batch-norm moving statistic, produced by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct StatUpdate {
    pub param: usize,
    pub value: Tensor,
}

#[derive(Debug)]
pub struct NetOutput {
    /// `(batch, 3)` logits or `(batch, 1)` scores.
    pub dem: Tensor,
    pub rep: Tensor,
    pub updates: Vec<StatUpdate>,
}

#[derive(Debug, Clone, Copy)]
struct BnIds {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
struct DenseIds {
    kernel: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
enum LayerParams {
    None,
    Conv { kernel: usize, bias: Option<usize> },
    Bn(BnIds),
}

#[derive(Debug, Clone)]
struct Head {
    id: HeadId,
    bn: BnIds,
    hidden: Vec<DenseIds>,
    out: DenseIds,
}

/// A built network: shared trunk, two heads, per-layer trainable flags.
#[derive(Debug)]
pub struct ModelHandle {
    config: ModelConfig,
    graph: LayerGraph,
    layer_params: Vec<LayerParams>,
    trainable: Vec<bool>,
    last_use: Vec<usize>,
    heads: [Head; 2],
    params: ParamStore,
    dtype: DType,
    device: Device,
}

struct Ctx<'a> {
    rng: &'a mut ChaCha8Rng,
    updates: &'a mut Vec<StatUpdate>,
}

fn cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_DIR_ENV) {
        return PathBuf::from(dir);
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_default();
    home.join(".cache").join("polyview")
}

/// Expected location of the pre-trained trunk weights for a config.
pub fn pretrained_path(config: &ModelConfig) -> PathBuf {
    cache_dir().join(format!("{}_{}.safetensors", config.backbone, config.pretrained))
}

/// Builds the network with pre-trained trunk weights (or random ones when
/// `pretrained = "none"`) and applies the configured freeze strategy.
pub fn build_model(config: &ModelConfig) -> Result<ModelHandle> {
    if config.backbone_spec().is_pretrained() && !config.trunk.is_full() {
        return Err(ModelError::Config {
            field: "trunk",
            message: "a rescaled trunk has no pre-trained weights; set pretrained = \"none\"".into(),
        });
    }
    let model = build_untrained(config)?;
    if config.backbone_spec().is_pretrained() {
        let path = pretrained_path(config);
        if !path.is_file() {
            return Err(ModelError::MissingWeights {
                family: config.backbone.to_string(),
                source_id: config.pretrained.clone(),
                path,
            });
        }
        let n = model
            .params
            .load_from(&path, |p| matches!(p.owner, Owner::Trunk(_)))?;
        log::info!("loaded {n} pre-trained trunk tensors from {}", path.display());
    }
    Ok(model)
}

/// Same architecture as [`build_model`] but every parameter randomly
/// initialised from `config.seed`; used before restoring a checkpoint.
pub fn build_untrained(config: &ModelConfig) -> Result<ModelHandle> {
    config.validate()?;
    let dtype = config.precision.dtype();
    let graph = config.backbone.graph(&config.trunk);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamStore::default();

    let mut layer_params = Vec::with_capacity(graph.len());
    for (i, layer) in graph.layers.iter().enumerate() {
        let owner = Owner::Trunk(i);
        let lp = match layer.kind {
            LayerKind::Conv { kernel, bias, .. } => {
                let (cin, cout) = (layer.in_channels, layer.out_channels);
                let k = params.add(
                    format!("{}/kernel", layer.name),
                    &[cout, cin, kernel, kernel],
                    Init::GlorotUniform {
                        fan_in: cin * kernel * kernel,
                        fan_out: cout * kernel * kernel,
                    },
                    owner,
                    ParamRole::Weight,
                    dtype,
                    &mut rng,
                )?;
                let b = if bias {
                    Some(params.add(format!("{}/bias", layer.name), &[cout], Init::Zeros, owner, ParamRole::Weight, dtype, &mut rng)?)
                } else {
                    None
                };
                LayerParams::Conv { kernel: k, bias: b }
            }
            LayerKind::BatchNorm => {
                LayerParams::Bn(add_bn(&mut params, &layer.name, layer.out_channels, owner, dtype, &mut rng)?)
            }
            _ => LayerParams::None,
        };
        layer_params.push(lp);
    }

    let features = graph.output_channels();
    let heads = HeadId::BOTH.map(|id| -> Result<Head> {
        let prefix = id.prefix();
        let owner = Owner::Head(id);
        let bn = add_bn(&mut params, &format!("{prefix}/bn"), features, owner, dtype, &mut rng)?;
        let mut hidden = Vec::new();
        let mut width = features;
        for (j, &w) in config.head_widths.iter().enumerate() {
            hidden.push(add_dense(&mut params, &format!("{prefix}/dense_{}", j + 1), width, w, owner, dtype, &mut rng)?);
            width = w;
        }
        let out = add_dense(&mut params, &format!("{prefix}/output"), width, config.task.outputs(), owner, dtype, &mut rng)?;
        Ok(Head { id, bn, hidden, out })
    });
    let [dem, rep] = heads;
    let heads = [dem?, rep?];

    let mut last_use = vec![0; graph.len()];
    for (i, layer) in graph.layers.iter().enumerate() {
        for &j in &layer.inputs {
            last_use[j] = last_use[j].max(i);
        }
    }
    let trainable = graph.trainable_mask(config.backbone, config.version)?;

    Ok(ModelHandle {
        config: config.clone(),
        graph,
        layer_params,
        trainable,
        last_use,
        heads,
        params,
        dtype,
        device: Device::Cpu,
    })
}

fn add_bn(
    params: &mut ParamStore,
    name: &str,
    c: usize,
    owner: Owner,
    dtype: DType,
    rng: &mut ChaCha8Rng,
) -> Result<BnIds> {
    Ok(BnIds {
        gamma: params.add(format!("{name}/gamma"), &[c], Init::Ones, owner, ParamRole::Weight, dtype, rng)?,
        beta: params.add(format!("{name}/beta"), &[c], Init::Zeros, owner, ParamRole::Weight, dtype, rng)?,
        mean: params.add(format!("{name}/moving_mean"), &[c], Init::Zeros, owner, ParamRole::RunningStat, dtype, rng)?,
        var: params.add(format!("{name}/moving_variance"), &[c], Init::Ones, owner, ParamRole::RunningStat, dtype, rng)?,
    })
}

fn add_dense(
    params: &mut ParamStore,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    owner: Owner,
    dtype: DType,
    rng: &mut ChaCha8Rng,
) -> Result<DenseIds> {
    Ok(DenseIds {
        kernel: params.add(
            format!("{name}/kernel"),
            &[fan_in, fan_out],
            Init::GlorotUniform { fan_in, fan_out },
            owner,
            ParamRole::Weight,
            dtype,
            rng,
        )?,
        bias: params.add(format!("{name}/bias"), &[fan_out], Init::Zeros, owner, ParamRole::Weight, dtype, rng)?,
    })
}

/// Re-applies a freeze strategy to an existing model. Heads always stay trainable.
pub fn apply_freeze_strategy(mut model: ModelHandle, version: FreezeVersion) -> Result<ModelHandle> {
    model.trainable = model.graph.trainable_mask(model.config.backbone, version)?;
    model.config.version = version;
    Ok(model)
}

impl ModelHandle {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    pub fn graph(&self) -> &LayerGraph {
        &self.graph
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn preprocessing(&self) -> Preprocessing {
        self.config.preprocessing()
    }

    /// Trainable flag of every trunk layer, indexed like the layer graph.
    pub fn trunk_trainable(&self) -> &[bool] {
        &self.trainable
    }

    pub fn has_trainable_trunk(&self) -> bool {
        self.trainable.iter().any(|&t| t)
    }

    pub fn is_trainable(&self, owner: Owner) -> bool {
        match owner {
            Owner::Trunk(l) => self.trainable[l],
            Owner::Head(_) => true,
        }
    }

    /// Variables handed to the optimizer: weights of trainable layers and heads.
    pub fn trainable_vars(&self) -> Vec<Var> {
        self.params
            .iter()
            .filter(|p| p.role == ParamRole::Weight && self.is_trainable(p.owner))
            .map(|p| p.var.clone())
            .collect()
    }

    pub fn loss_weight(&self, head: HeadId) -> f64 {
        match head {
            HeadId::Dem => self.config.loss_weights[0],
            HeadId::Rep => self.config.loss_weights[1],
        }
    }

    pub fn apply_updates(&self, updates: &[StatUpdate]) -> Result<()> {
        for u in updates {
            self.params.get(u.param).var.set(&u.value)?;
        }
        Ok(())
    }

    /// Full forward pass on an `(N, 224, 224, 3)` batch.
    pub fn forward(&self, images: &Tensor, mut mode: Mode<'_>) -> Result<NetOutput> {
        let mut updates = Vec::new();
        let features = self.trunk_forward(images, &mut mode, &mut updates)?;
        let (dem, rep) = self.heads_forward_inner(&features, &mut mode, &mut updates)?;
        Ok(NetOutput { dem, rep, updates })
    }

    /// Pooled trunk features `(N, F)` in inference mode, without gradient tracking.
    pub fn features(&self, images: &Tensor) -> Result<Tensor> {
        let mut updates = Vec::new();
        self.trunk_forward(images, &mut Mode::Eval, &mut updates)
    }

    /// Head pass on precomputed trunk features.
    pub fn heads_forward(&self, features: &Tensor, mut mode: Mode<'_>) -> Result<NetOutput> {
        let mut updates = Vec::new();
        let (dem, rep) = self.heads_forward_inner(features, &mut mode, &mut updates)?;
        Ok(NetOutput { dem, rep, updates })
    }

    /// Row-normalised class probabilities from classification logits.
    pub fn probabilities(&self, logits: &Tensor) -> Result<Tensor> {
        softmax_rows(logits)
    }

    fn trunk_forward(&self, images: &Tensor, mode: &mut Mode<'_>, updates: &mut Vec<StatUpdate>) -> Result<Tensor> {
        let train = mode.is_train();
        let x = images
            .to_dtype(self.dtype)?
            .permute((0, 3, 1, 2))?
            .contiguous()?;
        let mut outs: Vec<Option<Tensor>> = vec![None; self.graph.len()];
        outs[0] = Some(x);
        for (i, layer) in self.graph.layers.iter().enumerate().skip(1) {
            let input = |k: usize| -> &Tensor {
                outs[layer.inputs[k]]
                    .as_ref()
                    .expect("layer input evaluated before use")
            };
            let track = train && self.trainable[i];
            let y = match (layer.kind, self.layer_params[i]) {
                (LayerKind::ZeroPad(p), _) => input(0).pad_with_zeros(2, p, p)?.pad_with_zeros(3, p, p)?,
                (LayerKind::Conv { stride, pad, .. }, LayerParams::Conv { kernel, bias }) => {
                    let w = self.params.tensor(kernel, track);
                    let y = input(0).conv2d(&w, pad, stride, 1, 1)?;
                    match bias {
                        Some(b) => {
                            let b = self.params.tensor(b, track).reshape((1, (), 1, 1))?;
                            y.broadcast_add(&b)?
                        }
                        None => y,
                    }
                }
                (LayerKind::BatchNorm, LayerParams::Bn(ids)) => {
                    self.batch_norm(input(0), ids, track, BN_EPSILON, BN_MOMENTUM, updates)?
                }
                (LayerKind::Relu, _) => input(0).relu()?,
                (LayerKind::MaxPool { size, stride }, _) => input(0).max_pool2d_with_stride(size, stride)?,
                (LayerKind::AvgPool { size, stride }, _) => input(0).avg_pool2d_with_stride(size, stride)?,
                (LayerKind::Subsample(s), _) => subsample(input(0), s)?,
                (LayerKind::Concat, _) => Tensor::cat(&[input(0), input(1)], 1)?,
                (LayerKind::Add, _) => (input(0) + input(1))?,
                (LayerKind::GlobalAvgPool, _) => input(0).mean((2, 3))?,
                (kind, _) => unreachable!("layer {} ({kind:?}) without matching parameters", layer.name),
            };
            outs[i] = Some(y);
            for &j in &layer.inputs {
                if self.last_use[j] == i {
                    outs[j] = None;
                }
            }
        }
        Ok(outs.pop().flatten().expect("graph has an output layer"))
    }

    /// Batch normalisation over every dimension except 1. Uses (and updates)
    /// batch statistics only when `train` is set.
    fn batch_norm(
        &self,
        x: &Tensor,
        ids: BnIds,
        train: bool,
        eps: f64,
        momentum: f64,
        updates: &mut Vec<StatUpdate>,
    ) -> Result<Tensor> {
        let rank = x.rank();
        let mut shape = vec![1; rank];
        shape[1] = x.dim(1)?;
        let reduce: Vec<usize> = (0..rank).filter(|&d| d != 1).collect();
        let gamma = self.params.tensor(ids.gamma, train).reshape(shape.as_slice())?;
        let beta = self.params.tensor(ids.beta, train).reshape(shape.as_slice())?;
        if train {
            let mean = x.mean_keepdim(reduce.as_slice())?;
            let centered = x.broadcast_sub(&mean)?;
            let var = centered.sqr()?.mean_keepdim(reduce.as_slice())?;
            let y = centered
                .broadcast_div(&(var.clone() + eps)?.sqrt()?)?
                .broadcast_mul(&gamma)?
                .broadcast_add(&beta)?;
            for (id, batch) in [(ids.mean, mean), (ids.var, var)] {
                let old = self.params.tensor(id, false);
                let new = ((old * momentum)? + (batch.detach().flatten_all()? * (1.0 - momentum))?)?;
                updates.push(StatUpdate { param: id, value: new });
            }
            Ok(y)
        } else {
            let mean = self.params.tensor(ids.mean, false).reshape(shape.as_slice())?;
            let var = self.params.tensor(ids.var, false).reshape(shape.as_slice())?;
            let scale = gamma.broadcast_div(&(var + eps)?.sqrt()?)?;
            let shift = (beta - mean.broadcast_mul(&scale)?)?;
            Ok(x.broadcast_mul(&scale)?.broadcast_add(&shift)?)
        }
    }

    fn heads_forward_inner(
        &self,
        features: &Tensor,
        mode: &mut Mode<'_>,
        updates: &mut Vec<StatUpdate>,
    ) -> Result<(Tensor, Tensor)> {
        let features = features.to_dtype(self.dtype)?;
        let mut outs = Vec::with_capacity(2);
        for head in &self.heads {
            // a head with zero loss weight is not being trained
            let train_head = self.loss_weight(head.id) != 0.0;
            let y = match mode {
                Mode::Train(rng) if train_head => {
                    let mut ctx = Ctx { rng, updates };
                    self.head_forward(head, &features, Some(&mut ctx))?
                }
                _ => self.head_forward(head, &features, None)?,
            };
            outs.push(y);
        }
        let rep = outs.pop().expect("two heads");
        let dem = outs.pop().expect("two heads");
        Ok((dem, rep))
    }

    fn head_forward(&self, head: &Head, x: &Tensor, mut ctx: Option<&mut Ctx<'_>>) -> Result<Tensor> {
        let train = ctx.is_some();
        let mut scratch = Vec::new();
        let updates = match ctx.as_deref_mut() {
            Some(c) => &mut *c.updates,
            None => &mut scratch,
        };
        let mut x = self.batch_norm(x, head.bn, train, HEAD_BN_EPSILON, HEAD_BN_MOMENTUM, updates)?;
        for (j, d) in head.hidden.iter().enumerate() {
            x = self.dense(&x, *d, train)?.relu()?;
            if j == 0 && self.config.dropout > 0.0 {
                if let Some(c) = ctx.as_deref_mut() {
                    x = dropout(&x, self.config.dropout, c.rng)?;
                }
            }
        }
        self.dense(&x, head.out, train)
    }

    fn dense(&self, x: &Tensor, ids: DenseIds, track: bool) -> Result<Tensor> {
        let w = self.params.tensor(ids.kernel, track);
        let b = self.params.tensor(ids.bias, track);
        Ok(x.matmul(&w)?.broadcast_add(&b)?)
    }

    pub fn save_weights(&self, path: &Path) -> Result<()> {
        self.params.save(path)
    }

    /// Restores every parameter (trunk, heads, moving statistics).
    pub fn load_weights(&self, path: &Path) -> Result<()> {
        self.params.load_from(path, |_| true)?;
        Ok(())
    }
}

// Inverted dropout: kept units are scaled by 1 / (1 - rate).
fn dropout(x: &Tensor, rate: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..x.elem_count())
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
    Ok((x * mask)?)
}

fn subsample(x: &Tensor, stride: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let rows: Vec<u32> = (0..h).step_by(stride).map(|v| v as u32).collect();
    let cols: Vec<u32> = (0..w).step_by(stride).map(|v| v as u32).collect();
    let rows = Tensor::new(rows.as_slice(), x.device())?;
    let cols = Tensor::new(cols.as_slice(), x.device())?;
    Ok(x.index_select(&rows, 2)?.index_select(&cols, 3)?)
}
