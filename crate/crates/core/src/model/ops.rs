use candle_core::{DType, Tensor, D};

use super::{ModelError, Result};

/// `exp(z_i) / sum_j exp(z_j)`, evaluated after subtracting `max(z)`.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(ModelError::Empty);
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Row-wise softmax of a `(batch, classes)` tensor.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let max = logits.max_keepdim(D::Minus1)?.detach();
    let e = logits.broadcast_sub(&max)?.exp()?;
    let sum = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&sum)?)
}

pub fn log_softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let max = logits.max_keepdim(D::Minus1)?.detach();
    let shifted = logits.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Mean categorical cross-entropy; `targets` are class indices.
pub fn cross_entropy_with_logits(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let (b, k) = logits.dims2()?;
    if b != targets.len() || b == 0 {
        return Err(ModelError::Empty);
    }
    let mut onehot = vec![0f64; b * k];
    for (i, &t) in targets.iter().enumerate() {
        onehot[i * k + t] = 1.0;
    }
    let onehot = Tensor::from_vec(onehot, (b, k), logits.device())?.to_dtype(logits.dtype())?;
    let logp = log_softmax_rows(logits)?;
    Ok((logp * onehot)?.sum_all()?.affine(-1.0 / b as f64, 0.0)?)
}

/// Mean squared error between a `(batch, 1)` prediction and scalar targets.
pub fn mse_loss(pred: &Tensor, targets: &[f64]) -> Result<Tensor> {
    let b = pred.dim(0)?;
    if b != targets.len() || b == 0 {
        return Err(ModelError::Empty);
    }
    let t = Tensor::from_vec(targets.to_vec(), (b, 1), pred.device())?.to_dtype(pred.dtype())?;
    Ok((pred - t)?.sqr()?.mean_all()?)
}

/// `w_dem * loss_dem + w_rep * loss_rep`.
pub fn multitask_loss(loss_dem: f64, loss_rep: f64, w_dem: f64, w_rep: f64) -> Result<f64> {
    for l in [loss_dem, loss_rep] {
        if l.is_nan() || l < 0.0 {
            return Err(ModelError::NegativeLoss(l));
        }
    }
    for w in [w_dem, w_rep] {
        if !w.is_finite() || w < 0.0 {
            return Err(ModelError::BadWeight(w));
        }
    }
    Ok(w_dem * loss_dem + w_rep * loss_rep)
}

/// Graph version of [`multitask_loss`]. A zero weight drops that head from
/// the graph so it receives no gradient at all.
pub fn multitask_loss_tensor(loss_dem: &Tensor, loss_rep: &Tensor, w_dem: f64, w_rep: f64) -> Result<Tensor> {
    let terms: Vec<Tensor> = [(loss_dem, w_dem), (loss_rep, w_rep)]
        .into_iter()
        .filter(|&(_, w)| w != 0.0)
        .map(|(l, w)| l.affine(w, 0.0))
        .collect::<candle_core::Result<_>>()?;
    match terms.as_slice() {
        [a] => Ok(a.clone()),
        [a, b] => Ok((a + b)?),
        _ => Err(ModelError::BadWeight(0.0)),
    }
}

pub(crate) fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
