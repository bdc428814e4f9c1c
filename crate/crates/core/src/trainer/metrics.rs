use crate::autodiff::BCE_EPS;
use crate::datapipe::Task;
use crate::error::{Error, Result};

/// Class decision boundary on the sigmoid output.
pub const DECISION_THRESHOLD: f64 = 0.5;

fn check(pred: &[f64], y: &[f64]) -> Result<()> {
    if pred.len() != y.len() {
        return Err(Error::ShapeMismatch {
            op: "metric",
            lhs: vec![pred.len()],
            rhs: vec![y.len()],
        });
    }
    if pred.is_empty() {
        return Err(Error::Data("cannot score an empty split".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy with probabilities clamped away from 0 and 1.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    check(p, y)?;
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-total / p.len() as f64)
}

/// `mean(|ŷ - y| / y)`.
pub fn regression_loss(pred: &[f64], y: &[f64]) -> Result<f64> {
    check(pred, y)?;
    if let Some(bad) = y.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "relative error needs positive targets, got {bad}"
        )));
    }
    Ok(pred
        .iter()
        .zip(y)
        .map(|(p, y)| (p - y).abs() / y)
        .sum::<f64>()
        / y.len() as f64)
}

pub fn predicted_class(p: f64) -> f64 {
    if p >= DECISION_THRESHOLD {
        1.0
    } else {
        0.0
    }
}

/// Percentage of correct class decisions.
pub fn accuracy(p: &[f64], y: &[f64]) -> Result<f64> {
    check(p, y)?;
    let correct = p
        .iter()
        .zip(y)
        .filter(|(&p, &y)| predicted_class(p) == y)
        .count();
    Ok(100.0 * correct as f64 / p.len() as f64)
}

/// Mean absolute percentage error.
pub fn mape(pred: &[f64], y: &[f64]) -> Result<f64> {
    Ok(100.0 * regression_loss(pred, y)?)
}

pub fn task_loss(task: Task, pred: &[f64], y: &[f64]) -> Result<f64> {
    match task {
        Task::Classify => bce_loss(pred, y),
        Task::Predict => regression_loss(pred, y),
    }
}

/// Accuracy for classification, MAPE for prediction.
pub fn task_metric(task: Task, pred: &[f64], y: &[f64]) -> Result<f64> {
    match task {
        Task::Classify => accuracy(pred, y),
        Task::Predict => mape(pred, y),
    }
}

pub fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Classify => "accuracy",
        Task::Predict => "mape",
    }
}

/// Metric as printed in reports: one decimal place.
pub fn format_metric(value: f64) -> String {
    format!("{value:.1}")
}
