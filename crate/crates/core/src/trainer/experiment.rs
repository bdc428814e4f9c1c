use serde::{Deserialize, Serialize};

use super::report::{Checkpoint, RunReport};
use super::split::{split, Part, Split, SplitSpec};
use super::train::{evaluate, train, TrainConfig};
use crate::datapipe::{
    build_features, rank_attributes, select_features, select_top, Attribute, BatteryRecord,
    FeatureSelection, FeatureTensor, PipelineOptions, Task, FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::seqmodel::{build_classifier, build_predictor, Model};

/// One end-to-end run: split, features, model, training, test evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: Task,
    pub selection: FeatureSelection,
    pub pipeline: PipelineOptions,
    pub split_seed: u64,
    /// Classifier only.
    pub attention: bool,
    /// Parameter initialisation.
    pub model_seed: u64,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Classify,
            selection: FeatureSelection::Default,
            pipeline: PipelineOptions::default(),
            split_seed: 0,
            attention: false,
            model_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub model: Model,
    pub report: RunReport,
    pub checkpoint: Checkpoint,
}

pub fn resolve_selection(
    selection: &FeatureSelection,
    train_records: &[BatteryRecord],
    pipeline: &PipelineOptions,
) -> Result<Vec<Attribute>> {
    match selection {
        FeatureSelection::Default => Ok(select_features()),
        FeatureSelection::TopK(k) => {
            if *k == 0 {
                return Err(Error::InvalidConfig("top-k selection needs k >= 1".into()));
            }
            let ranking = rank_attributes(train_records, pipeline.outliers.as_ref())?;
            Ok(select_top(&ranking, *k))
        }
        FeatureSelection::Explicit(list) => {
            if list.is_empty() {
                return Err(Error::InvalidConfig(
                    "explicit feature list is empty".into(),
                ));
            }
            Ok(list.clone())
        }
    }
}

pub fn build_model(task: Task, features: usize, attention: bool, seed: u64) -> Result<Model> {
    match task {
        Task::Classify => build_classifier(features, attention, seed),
        Task::Predict => build_predictor(features, seed),
    }
}

/// Feature tensors for all three partitions, normalised with training
/// statistics.
pub fn split_features(
    records: &[BatteryRecord],
    split: &Split,
    task: Task,
    attributes: &[Attribute],
    pipeline: &PipelineOptions,
) -> Result<[FeatureTensor; 3]> {
    let train = build_features(
        &split.select(records, Part::Train)?,
        task,
        attributes,
        None,
        pipeline,
    )?;
    let norm = train.norm.clone();
    let val = build_features(
        &split.select(records, Part::Val)?,
        task,
        attributes,
        Some(&norm),
        pipeline,
    )?;
    let test = build_features(
        &split.select(records, Part::Test)?,
        task,
        attributes,
        Some(&norm),
        pipeline,
    )?;
    Ok([train, val, test])
}

pub fn run_experiment(records: &[BatteryRecord], cfg: &ExperimentConfig) -> Result<Experiment> {
    if let Some(o) = &cfg.pipeline.outliers {
        o.validate()?;
    }
    cfg.train.validate()?;
    let spec = SplitSpec::for_size(records.len(), cfg.split_seed)?;
    let split = split(records, &spec)?;
    let attributes = resolve_selection(
        &cfg.selection,
        &split.select(records, Part::Train)?,
        &cfg.pipeline,
    )?;
    let [train_ft, val_ft, test_ft] =
        split_features(records, &split, cfg.task, &attributes, &cfg.pipeline)?;
    let model = build_model(cfg.task, attributes.len(), cfg.attention, cfg.model_seed)?;
    let (model, mut report) = match train(model, &train_ft, &val_ft, &cfg.train) {
        Ok(out) => out,
        Err(Error::Diverged {
            epoch,
            last_finite,
            mut report,
        }) => {
            report.split = Some(split);
            return Err(Error::Diverged {
                epoch,
                last_finite,
                report,
            });
        }
        Err(e) => return Err(e),
    };
    let test = evaluate(&model, &test_ft)?;
    report.metrics.set(Part::Test, test.metrics());
    report.predictions.extend(test.rows(Part::Test));
    report.split = Some(split.clone());
    let checkpoint = Checkpoint {
        format: FORMAT_VERSION.to_string(),
        task: cfg.task,
        attributes,
        norm: train_ft.norm,
        pipeline: cfg.pipeline.clone(),
        split,
        data: None,
        model: model.clone(),
    };
    Ok(Experiment {
        model,
        report,
        checkpoint,
    })
}
