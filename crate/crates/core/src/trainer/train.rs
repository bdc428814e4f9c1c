use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{task_loss, task_metric};
use super::optim::{clip_global_norm, Adam, AdamConfig};
use super::report::{EpochRecord, Prediction, RunReport, SplitMetrics};
use super::split::Part;
use crate::autodiff::{Tape, Tensor};
use crate::datapipe::{FeatureTensor, Task};
use crate::error::{Error, Result};
use crate::seqmodel::{Model, OutputTransform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// `None` trains on the whole split at once.
    pub batch_size: Option<usize>,
    /// Drives dropout masks and minibatch order.
    pub seed: u64,
    /// Stop after this many epochs without a lower validation loss.
    pub early_stop: Option<usize>,
    pub clip_norm: Option<f64>,
    /// Regression only: the network predicts log cycle life.
    pub log_target: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            adam: AdamConfig::default(),
            batch_size: None,
            seed: 0,
            early_stop: None,
            clip_norm: Some(5.0),
            log_target: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.adam.learning_rate
            ));
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be at least 1".into());
        }
        if self.early_stop == Some(0) {
            return bad("early-stop patience must be at least 1".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// Loss, metric and per-battery outputs of a frozen model on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub metric: f64,
    pub ids: Vec<String>,
    pub truth: Vec<f64>,
    pub predictions: Vec<f64>,
}

impl Evaluation {
    pub fn metrics(&self) -> SplitMetrics {
        SplitMetrics {
            loss: self.loss,
            metric: self.metric,
        }
    }

    pub fn rows(&self, part: Part) -> Vec<Prediction> {
        self.ids
            .iter()
            .zip(&self.truth)
            .zip(&self.predictions)
            .map(|((id, &truth), &prediction)| Prediction {
                split: part,
                battery_id: id.clone(),
                truth,
                prediction,
            })
            .collect()
    }
}

/// Dropout-free evaluation. Loss and metric are summed in battery-id order,
/// so shuffling the split leaves them bit-identical.
pub fn evaluate(model: &Model, data: &FeatureTensor) -> Result<Evaluation> {
    let predictions = model.predict(&data.x)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.ids[a].cmp(&data.ids[b]));
    let p: Vec<f64> = order.iter().map(|&i| predictions[i]).collect();
    let y: Vec<f64> = order.iter().map(|&i| data.y[i]).collect();
    Ok(Evaluation {
        loss: task_loss(data.task, &p, &y)?,
        metric: task_metric(data.task, &p, &y)?,
        ids: data.ids.clone(),
        truth: data.y.clone(),
        predictions,
    })
}

/// Output scaling so an untrained regressor starts near the typical life.
fn regression_output(labels: &[f64], log_target: bool) -> OutputTransform {
    let n = labels.len() as f64;
    if log_target {
        OutputTransform::ExpScale {
            factor: (labels.iter().map(|y| y.ln()).sum::<f64>() / n).exp(),
        }
    } else {
        OutputTransform::Scale {
            factor: labels.iter().sum::<f64>() / n,
        }
    }
}

fn gradient_step(
    model: &mut Model,
    opt: &mut Adam,
    batch: &FeatureTensor,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut tape = Tape::new();
    let params = model.register(&mut tape, true);
    let input = tape.constant(batch.x.clone());
    let out = model.graph(&mut tape, input, &params, true, rng)?;
    let loss = match batch.task {
        Task::Classify => tape.bce(out, &batch.y)?,
        Task::Predict => tape.mean_abs_rel_err(out, &batch.y)?,
    };
    let grads = tape.backward(loss)?;
    let mut grads: Vec<Tensor> = params
        .iter()
        .zip(model.tensors())
        .map(|(&v, t)| grads.get_or_zeros(v, t))
        .collect();
    if let Some(max) = cfg.clip_norm {
        clip_global_norm(&mut grads, max);
    }
    opt.step(model.tensors_mut(), &grads)
}

/// Trains with Adam and keeps the parameters of the epoch with the lowest
/// validation loss (earliest on ties).
///
/// A regressor with an identity output is first given an output scale
/// fitted to the training labels.
pub fn train(
    mut model: Model,
    train: &FeatureTensor,
    val: &FeatureTensor,
    cfg: &TrainConfig,
) -> Result<(Model, RunReport)> {
    cfg.validate()?;
    model.validate()?;
    if train.task != val.task {
        return Err(Error::InvalidConfig(
            "train and validation sets are for different tasks".into(),
        ));
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data(
            "training needs non-empty train and validation splits".into(),
        ));
    }
    let task = train.task;
    if task == Task::Predict && model.output == OutputTransform::Identity {
        model.output = regression_output(&train.y, cfg.log_target);
    }

    let mut report = RunReport::new(task, cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.adam, model.tensors());
    let mut best: Option<(f64, Model)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        match cfg.batch_size {
            Some(bs) if bs < train.len() => {
                order.shuffle(&mut rng);
                for chunk in order.chunks(bs) {
                    gradient_step(&mut model, &mut opt, &train.subset(chunk), cfg, &mut rng)?;
                }
            }
            _ => gradient_step(&mut model, &mut opt, train, cfg, &mut rng)?,
        }

        let tr = evaluate(&model, train)?;
        let va = evaluate(&model, val)?;
        if !(tr.loss.is_finite() && va.loss.is_finite()) {
            let last_finite = report.history.last().map(|r| r.epoch);
            if let Some((_, m)) = &best {
                fill_final(&mut report, m, train, val)?;
            }
            return Err(Error::Diverged {
                epoch,
                last_finite,
                report: Box::new(report),
            });
        }
        report.history.push(EpochRecord {
            epoch,
            train_loss: tr.loss,
            val_loss: va.loss,
            train_metric: tr.metric,
            val_metric: va.metric,
        });
        if best.as_ref().is_none_or(|(l, _)| va.loss < *l) {
            best = Some((va.loss, model.clone()));
            report.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.early_stop.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }

    let (_, best) = best.expect("at least one epoch ran");
    fill_final(&mut report, &best, train, val)?;
    Ok((best, report))
}

fn fill_final(
    report: &mut RunReport,
    model: &Model,
    train: &FeatureTensor,
    val: &FeatureTensor,
) -> Result<()> {
    for (part, data) in [(Part::Train, train), (Part::Val, val)] {
        let ev = evaluate(model, data)?;
        report.metrics.set(part, ev.metrics());
        report.predictions.retain(|p| p.split != part);
        report.predictions.extend(ev.rows(part));
    }
    Ok(())
}
