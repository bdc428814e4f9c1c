use serde::{Deserialize, Serialize};

use super::clean::OutlierConfig;
use super::labels::{make_labels, GOOD_THRESHOLD};
use super::rank::AttributeScore;
use super::record::{Attribute, BatteryRecord, Reduction, Task, Variable};
use super::reduce::reduce_one;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Features with less spread than this are mapped to zero.
const MIN_STD: f64 = 1e-12;

/// The default 15 model inputs: the three strongest attributes followed by
/// the twelve moderately useful ones.
pub fn select_features() -> Vec<Attribute> {
    use Reduction::*;
    use Variable::*;
    [
        (Mean, QdLin),
        (Var, QdLin),
        (Var, DqDv),
        (Max, T),
        (Mean, DqDv),
        (Mean, Qd),
        (Max, QdLin),
        (Min, T),
        (Var, T),
        (Mean, TdLin),
        (Max, Qd),
        (Mean, T),
        (Max, TdLin),
        (Var, TdLin),
        (Min, TdLin),
    ]
    .into_iter()
    .map(|(r, v)| Attribute::new(r, v))
    .collect()
}

/// The first `k` attributes of a ranking.
pub fn select_top(ranking: &[AttributeScore], k: usize) -> Vec<Attribute> {
    ranking.iter().take(k).map(|s| s.attribute).collect()
}

/// How the model inputs are chosen.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSelection {
    #[default]
    Default,
    /// First `k` attributes of the Δ(100, 10) ranking.
    TopK(usize),
    Explicit(Vec<Attribute>),
}

/// Options shared by every feature-building call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// `None` disables outlier cleaning.
    pub outliers: Option<OutlierConfig>,
    pub threshold: u32,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            outliers: Some(OutlierConfig::default()),
            threshold: GOOD_THRESHOLD,
        }
    }
}

/// Per-feature z-score statistics from a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub attributes: Vec<Attribute>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Statistics over every row of `rows` (each of width `attributes.len()`).
    fn fit(attributes: &[Attribute], rows: &[Vec<f64>]) -> Self {
        let width = attributes.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for row in rows {
            mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for row in rows {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Self {
            attributes: attributes.to_vec(),
            mean,
            std,
        }
    }

    pub fn apply(&self, j: usize, x: f64) -> f64 {
        let scale = self.mean[j].abs().max(1.0);
        if self.std[j] <= MIN_STD * scale {
            0.0
        } else {
            (x - self.mean[j]) / self.std[j]
        }
    }
}

/// Model-ready inputs for a set of batteries.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    pub ids: Vec<String>,
    /// `[batteries, cycles, features]`.
    pub x: Tensor,
    pub y: Vec<f64>,
    pub norm: NormStats,
    pub task: Task,
}

impl FeatureTensor {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Rows `idx` as a new tensor, in the given order.
    pub fn subset(&self, idx: &[usize]) -> FeatureTensor {
        let &[_, t, f] = self.x.shape() else {
            unreachable!()
        };
        let stride = t * f;
        let mut data = Vec::with_capacity(idx.len() * stride);
        for &i in idx {
            data.extend_from_slice(&self.x.data()[i * stride..(i + 1) * stride]);
        }
        FeatureTensor {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            x: Tensor::new(vec![idx.len(), t, f], data).expect("non-empty subset"),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            norm: self.norm.clone(),
            task: self.task,
        }
    }
}

/// Raw (unnormalised) selected attributes of the first `task.cycles()`
/// cycles of each record.
pub fn raw_features(
    records: &[BatteryRecord],
    task: Task,
    selected: &[Attribute],
    options: &PipelineOptions,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let steps = task.cycles();
    records
        .iter()
        .map(|r| {
            if r.cycles.len() < steps {
                return Err(Error::TooFewCycles {
                    battery: r.id.clone(),
                    have: r.cycles.len(),
                    need: steps,
                });
            }
            r.cycles[..steps]
                .iter()
                .map(|c| {
                    let row = reduce_one(&r.id, c, options.outliers.as_ref())?;
                    Ok(selected.iter().map(|a| row[a.index()]).collect())
                })
                .collect()
        })
        .collect()
}

/// Builds the `[batteries, cycles, features]` tensor and labels.
///
/// With `norm == None` the z-score statistics are fitted on these records
/// (the training split); otherwise the given statistics are applied.
pub fn build_features(
    records: &[BatteryRecord],
    task: Task,
    selected: &[Attribute],
    norm: Option<&NormStats>,
    options: &PipelineOptions,
) -> Result<FeatureTensor> {
    if selected.is_empty() {
        return Err(Error::InvalidConfig("no features selected".into()));
    }
    if records.is_empty() {
        return Err(Error::Data("no batteries to build features from".into()));
    }
    let y = make_labels(records, task, options.threshold)?;
    let raw = raw_features(records, task, selected, options)?;
    let norm = match norm {
        Some(n) => {
            if n.attributes != selected {
                return Err(Error::InvalidConfig(
                    "normalisation statistics were fitted on different attributes".into(),
                ));
            }
            n.clone()
        }
        None => {
            let rows: Vec<Vec<f64>> = raw.iter().flatten().cloned().collect();
            NormStats::fit(selected, &rows)
        }
    };
    let steps = task.cycles();
    let width = selected.len();
    let mut data = Vec::with_capacity(records.len() * steps * width);
    for battery in &raw {
        for row in battery {
            data.extend(row.iter().enumerate().map(|(j, &x)| norm.apply(j, x)));
        }
    }
    if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
        let battery = &records[bad / (steps * width)].id;
        return Err(Error::Data(format!(
            "battery {battery}: non-finite feature value"
        )));
    }
    Ok(FeatureTensor {
        ids: records.iter().map(|r| r.id.clone()).collect(),
        x: Tensor::new(vec![records.len(), steps, width], data)?,
        y,
        norm,
        task,
    })
}
