use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadId {
    Dem,
    Rep,
}

impl HeadId {
    pub const BOTH: [HeadId; 2] = [HeadId::Dem, HeadId::Rep];

    pub fn prefix(self) -> &'static str {
        match self {
            HeadId::Dem => "head_dem",
            HeadId::Rep => "head_rep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Owner {
    /// Trunk layer index.
    Trunk(usize),
    Head(HeadId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Updated by the optimizer when its owner is trainable.
    Weight,
    /// Batch-norm moving statistic, updated by forward passes in training mode.
    RunningStat,
}

#[derive(Debug)]
pub struct Param {
    pub name: String,
    pub var: Var,
    pub owner: Owner,
    pub role: ParamRole,
}

#[derive(Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

pub(crate) enum Init {
    GlorotUniform { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

impl ParamStore {
    pub(crate) fn add(
        &mut self,
        name: String,
        shape: &[usize],
        init: Init,
        owner: Owner,
        role: ParamRole,
        dtype: DType,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::GlorotUniform { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
            }
        };
        let t = Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(dtype)?;
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            var: Var::from_tensor(&t)?,
            owner,
            role,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn get(&self, id: usize) -> &Param {
        &self.params[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.by_name.get(name).map(|&i| &self.params[i])
    }

    /// Tensor for a forward pass: tracked when `track` is set, detached otherwise.
    pub(crate) fn tensor(&self, id: usize, track: bool) -> Tensor {
        let t = self.params[id].var.as_tensor();
        if track {
            t.clone()
        } else {
            t.detach()
        }
    }

    pub fn num_elements(&self, filter: impl Fn(&Param) -> bool) -> usize {
        self.params
            .iter()
            .filter(|p| filter(p))
            .map(|p| p.var.elem_count())
            .sum()
    }

    /// Deep copy of every tensor, in store order.
    pub fn snapshot(&self) -> Result<Vec<Tensor>> {
        Ok(self
            .params
            .iter()
            .map(|p| p.var.as_tensor().copy())
            .collect::<candle_core::Result<_>>()?)
    }

    pub fn restore(&self, snapshot: &[Tensor]) -> Result<()> {
        for (p, t) in self.params.iter().zip(snapshot) {
            p.var.set(t)?;
        }
        Ok(())
    }

    pub fn named_tensors(&self) -> HashMap<String, Tensor> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.var.as_tensor().clone()))
            .collect()
    }

    /// Deep copies keyed by parameter name.
    pub fn named_tensors_copy(&self) -> Result<HashMap<String, Tensor>> {
        self.params
            .iter()
            .map(|p| Ok((p.name.clone(), p.var.as_tensor().copy()?)))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        candle_core::safetensors::save(&self.named_tensors(), path)?;
        Ok(())
    }

    /// Overwrites parameters whose names satisfy `select` from a safetensors file.
    /// Every selected parameter must be present with a matching shape.
    pub fn load_from(&self, path: &Path, select: impl Fn(&Param) -> bool) -> Result<usize> {
        let tensors = candle_core::safetensors::load(path, &Device::Cpu)?;
        self.set_from_map(&tensors, select).map_err(|message| ModelError::BadWeights {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn set_from_map(
        &self,
        tensors: &HashMap<String, Tensor>,
        select: impl Fn(&Param) -> bool,
    ) -> std::result::Result<usize, String> {
        let mut loaded = 0;
        for p in self.params.iter().filter(|p| select(p)) {
            let t = tensors
                .get(&p.name)
                .ok_or_else(|| format!("missing tensor `{}`", p.name))?;
            if t.dims() != p.var.dims() {
                return Err(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    p.name,
                    t.dims(),
                    p.var.dims()
                ));
            }
            t.to_dtype(p.var.dtype())
                .and_then(|t| p.var.set(&t))
                .map_err(|e| e.to_string())?;
            loaded += 1;
        }
        Ok(loaded)
    }
}
