use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::split::{Part, Split};
use super::train::TrainConfig;
use crate::datapipe::{Attribute, NormStats, PipelineOptions, Task, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::seqmodel::Model;

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,train_metric,val_metric";

/// One epoch of the training history, measured with dropout off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_metric: f64,
    pub val_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub split: Part,
    pub battery_id: String,
    pub truth: f64,
    pub prediction: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub loss: f64,
    pub metric: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub train: Option<SplitMetrics>,
    pub val: Option<SplitMetrics>,
    pub test: Option<SplitMetrics>,
}

impl FinalMetrics {
    pub fn get(&self, part: Part) -> Option<SplitMetrics> {
        match part {
            Part::Train => self.train,
            Part::Val => self.val,
            Part::Test => self.test,
        }
    }

    pub fn set(&mut self, part: Part, m: SplitMetrics) {
        match part {
            Part::Train => self.train = Some(m),
            Part::Val => self.val = Some(m),
            Part::Test => self.test = Some(m),
        }
    }
}

/// Everything a training run produced, minus the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub task: Task,
    pub metric: String,
    pub config: TrainConfig,
    pub split: Option<Split>,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub metrics: FinalMetrics,
    pub predictions: Vec<Prediction>,
}

impl RunReport {
    pub fn new(task: Task, config: TrainConfig) -> Self {
        Self {
            format: FORMAT_VERSION.to_string(),
            task,
            metric: super::metrics::metric_name(task).to_string(),
            config,
            split: None,
            history: Vec::new(),
            best_epoch: None,
            metrics: FinalMetrics::default(),
            predictions: Vec::new(),
        }
    }

    pub fn best_record(&self) -> Option<&EpochRecord> {
        let best = self.best_epoch?;
        self.history.iter().find(|r| r.epoch == best)
    }

    pub fn predictions_for(&self, part: Part) -> impl Iterator<Item = &Prediction> {
        self.predictions.iter().filter(move |p| p.split == part)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.format != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported report format {:?}",
                report.format
            )));
        }
        Ok(report)
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.history {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.val_loss, r.train_metric, r.val_metric
            );
        }
        out
    }
}

/// A trained model plus everything needed to rebuild its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub task: Task,
    pub attributes: Vec<Attribute>,
    pub norm: NormStats,
    pub pipeline: PipelineOptions,
    pub split: Split,
    /// Dataset directory the run was trained on, when known.
    pub data: Option<String>,
    pub model: Model,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        if ckpt.format != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint format {:?}",
                ckpt.format
            )));
        }
        ckpt.model.validate()?;
        if ckpt.norm.attributes != ckpt.attributes
            || ckpt.norm.mean.len() != ckpt.attributes.len()
            || ckpt.norm.std.len() != ckpt.attributes.len()
        {
            return Err(Error::Data(
                "checkpoint normalisation does not match its attributes".into(),
            ));
        }
        if ckpt.model.input_shape().features != ckpt.attributes.len() {
            return Err(Error::Data(
                "checkpoint model width does not match its attributes".into(),
            ));
        }
        Ok(ckpt)
    }
}
