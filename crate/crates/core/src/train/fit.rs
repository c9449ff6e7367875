use std::fmt;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::split_fingerprint;
use super::predict::head_rows;
use super::{
    metric_name, Checkpoint, EarlyStopping, MetricSummary, Result, TrainError, TrainingConfig,
    TrainingState, Verdict,
};
use crate::dataset::{batch_tensor, DatasetSplit, LabeledExample};
use crate::labels::{SCALE_MAX, SCALE_MIN};
use crate::model::{
    cross_entropy_with_logits, log_softmax_rows, mse_loss, multitask_loss, multitask_loss_tensor,
    HeadId, Mode, ModelHandle, NetOutput, Task,
};

/// One line of the progress log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub max_epochs: usize,
    pub task: Task,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: [f64; 2],
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = metric_name(self.task);
        write!(
            f,
            "epoch {:>3}/{}  train_loss {:.6}  val_loss {:.6}  dem_{m} {:.4}  rep_{m} {:.4}",
            self.epoch, self.max_epochs, self.train_loss, self.val_loss, self.val_metric[0], self.val_metric[1]
        )
    }
}

struct Targets {
    classes: [Vec<usize>; 2],
    scores: [Vec<f64>; 2],
}

impl Targets {
    fn new(examples: &[LabeledExample]) -> Self {
        let classes = [
            examples.iter().map(|e| e.target_dem.category.index()).collect(),
            examples.iter().map(|e| e.target_rep.category.index()).collect(),
        ];
        let scores = [
            examples.iter().map(|e| e.target_dem.aes).collect(),
            examples.iter().map(|e| e.target_rep.aes).collect(),
        ];
        Self { classes, scores }
    }
}

/// Inputs fed to the network: raw images, or cached trunk features when
/// the trunk is fully frozen.
enum Inputs<'a> {
    Images(&'a [LabeledExample]),
    Features(Tensor),
}

impl Inputs<'_> {
    fn batch(&self, idx: &[usize], model: &ModelHandle) -> Result<Tensor> {
        match self {
            Inputs::Images(examples) => Ok(batch_tensor(idx.iter().map(|&i| &examples[i].image), model.device())?),
            Inputs::Features(f) => {
                let idx: Vec<u32> = idx.iter().map(|&i| i as u32).collect();
                let idx = Tensor::new(idx.as_slice(), f.device())?;
                Ok(f.index_select(&idx, 0)?)
            }
        }
    }

    fn forward(&self, x: &Tensor, model: &ModelHandle, mode: Mode<'_>) -> Result<NetOutput> {
        Ok(match self {
            Inputs::Images(_) => model.forward(x, mode)?,
            Inputs::Features(_) => model.heads_forward(x, mode)?,
        })
    }
}

fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

fn head_loss(task: Task, out: &Tensor, targets: &Targets, head: usize, idx: &[usize]) -> Result<Tensor> {
    Ok(match task {
        Task::Classification => cross_entropy_with_logits(out, &pick(&targets.classes[head], idx))?,
        Task::Regression => mse_loss(out, &pick(&targets.scores[head], idx))?,
    })
}

/// Loss and metric of every head over a set of examples, from eval-mode outputs.
struct Evaluation {
    loss: f64,
    metric: [f64; 2],
}

fn evaluate(model: &ModelHandle, inputs: &Inputs<'_>, targets: &Targets, idx: &[usize], batch: usize) -> Result<Evaluation> {
    let task = model.task();
    let mut loss_sum = [0.0f64; 2];
    let mut metric_sum = [0.0f64; 2];
    for chunk in idx.chunks(batch) {
        let x = inputs.batch(chunk, model)?;
        let out = inputs.forward(&x, model, Mode::Eval)?;
        for (h, t) in [&out.dem, &out.rep].into_iter().enumerate() {
            match task {
                Task::Classification => {
                    let logp = head_rows(&log_softmax_rows(t)?)?;
                    for (row, &i) in logp.iter().zip(chunk) {
                        let class = targets.classes[h][i];
                        loss_sum[h] -= row[class];
                        let best = (0..3).fold(0, |b, k| if row[k] > row[b] { k } else { b });
                        metric_sum[h] += (best == class) as u8 as f64;
                    }
                }
                Task::Regression => {
                    for (row, &i) in head_rows(t)?.iter().zip(chunk) {
                        let y = targets.scores[h][i];
                        loss_sum[h] += (row[0] - y).powi(2);
                        metric_sum[h] += (row[0].clamp(SCALE_MIN, SCALE_MAX) - y).abs();
                    }
                }
            }
        }
    }
    let n = idx.len() as f64;
    let [wd, wr] = [model.loss_weight(HeadId::Dem), model.loss_weight(HeadId::Rep)];
    let (ld, lr) = (loss_sum[0] / n, loss_sum[1] / n);
    let loss = if ld.is_finite() && lr.is_finite() {
        multitask_loss(ld, lr, wd, wr)?
    } else {
        f64::NAN
    };
    Ok(Evaluation {
        loss,
        metric: [metric_sum[0] / n, metric_sum[1] / n],
    })
}

/// Trains `model` in place and returns the best-epoch checkpoint and the run history.
pub fn train(
    model: &ModelHandle,
    examples: &[LabeledExample],
    split: &DatasetSplit,
    tcfg: &TrainingConfig,
) -> Result<(Checkpoint, TrainingState)> {
    train_with_observer(model, examples, split, tcfg, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_observer(
    model: &ModelHandle,
    examples: &[LabeledExample],
    split: &DatasetSplit,
    tcfg: &TrainingConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<(Checkpoint, TrainingState)> {
    tcfg.validate()?;
    if split.train.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if split.validation.is_empty() {
        return Err(TrainError::EmptySet("validation"));
    }
    if let Some(&index) = split.train.iter().chain(&split.validation).find(|&&i| i >= examples.len()) {
        return Err(TrainError::BadIndex {
            index,
            len: examples.len(),
        });
    }
    let variable = examples[0].variable;
    if examples.iter().any(|e| e.variable != variable) {
        return Err(TrainError::MixedVariables);
    }
    let expected = model.preprocessing();
    if let Some(e) = examples.iter().find(|e| e.image.preprocessing != expected) {
        return Err(TrainError::PreprocessingMismatch {
            expected,
            found: e.image.preprocessing,
        });
    }

    let task = model.task();
    let targets = Targets::new(examples);
    let inputs = if model.has_trainable_trunk() {
        Inputs::Images(examples)
    } else {
        let all: Vec<usize> = (0..examples.len()).collect();
        let mut parts = Vec::new();
        for chunk in all.chunks(tcfg.batch_size) {
            let x = batch_tensor(chunk.iter().map(|&i| &examples[i].image), model.device())?;
            parts.push(model.features(&x)?);
        }
        Inputs::Features(Tensor::cat(&parts, 0)?)
    };

    let mut opt = AdamW::new(
        model.trainable_vars(),
        ParamsAdamW {
            lr: tcfg.learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        },
    )?;
    let weights = [model.loss_weight(HeadId::Dem), model.loss_weight(HeadId::Rep)];
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut rule = EarlyStopping::new(tcfg.patience);
    let mut state = TrainingState::default();
    let mut best = model.params().snapshot()?;
    let mut order = split.train.clone();

    for epoch in 1..=tcfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(tcfg.batch_size) {
            let x = inputs.batch(chunk, model)?;
            let out = inputs.forward(&x, model, Mode::Train(&mut rng))?;
            let ld = head_loss(task, &out.dem, &targets, 0, chunk)?;
            let lr = head_loss(task, &out.rep, &targets, 1, chunk)?;
            let loss = multitask_loss_tensor(&ld, &lr, weights[0], weights[1])?;
            let value = crate::model::scalar(&loss)?;
            if !value.is_finite() {
                state.epoch = epoch - 1;
                return Err(TrainError::Diverged {
                    epoch,
                    loss: value,
                    state: Box::new(state),
                });
            }
            opt.backward_step(&loss)?;
            model.apply_updates(&out.updates)?;
            loss_sum += value * chunk.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;
        let val = evaluate(model, &inputs, &targets, &split.validation, tcfg.batch_size)?;
        state.epoch = epoch;
        state.train_loss.push(train_loss);
        state.val_loss.push(val.loss);
        state.val_metric.push(val.metric);
        if !val.loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: val.loss,
                state: Box::new(state),
            });
        }
        let verdict = rule.observe(val.loss);
        state.best_val_loss = rule.best();
        state.best_epoch = rule.best_epoch();
        state.epochs_since_improvement = rule.since_improvement();
        observer(&EpochRecord {
            epoch,
            max_epochs: tcfg.max_epochs,
            task,
            train_loss,
            val_loss: val.loss,
            val_metric: val.metric,
        });
        log::debug!("epoch {epoch}: {verdict:?}");
        match verdict {
            Verdict::Improved => best = model.params().snapshot()?,
            Verdict::Stop => {
                state.stopped_early = epoch < tcfg.max_epochs;
                break;
            }
            Verdict::Continue => {}
        }
    }
    model.params().restore(&best)?;

    let ids = |idx: &[usize]| -> Vec<String> { idx.iter().map(|&i| examples[i].image_id().to_string()).collect() };
    let (train_ids, validation_ids) = (ids(&split.train), ids(&split.validation));
    let best_metric = state.val_metric[state.best_epoch - 1];
    let checkpoint = Checkpoint {
        model: model.config().clone(),
        training: tcfg.clone(),
        variable,
        preprocessing: expected,
        split_fingerprint: split_fingerprint(&train_ids, &validation_ids),
        validation_ids,
        metrics: MetricSummary {
            best_epoch: state.best_epoch,
            epochs_run: state.epoch,
            best_val_loss: state.best_val_loss,
            metric: metric_name(task).into(),
            dem: best_metric[0],
            rep: best_metric[1],
        },
        weights: model.params().named_tensors_copy()?,
    };
    Ok((checkpoint, state))
}

/// Total validation loss of `model` on `idx`, computed as during training.
pub fn validation_loss(model: &ModelHandle, examples: &[LabeledExample], idx: &[usize], batch: usize) -> Result<f64> {
    let targets = Targets::new(examples);
    Ok(evaluate(model, &Inputs::Images(examples), &targets, idx, batch)?.loss)
}
