use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use cyclelife_core::datapipe::{build_features, Task};
use cyclelife_core::trainer::{
    evaluate, format_metric, metric_name, predicted_class, Checkpoint, Part,
};

use super::load_records;
use super::train::CHECKPOINT;
use crate::output::{ensure_dir, Csv};
use crate::settings::Settings;
use crate::EvalArgs;

pub const PREDICTIONS: &str = "predictions.csv";
pub const FADE_CURVES: &str = "fade_curves.csv";

pub fn run(s: &Settings, a: EvalArgs) -> anyhow::Result<()> {
    let path = a.run.join(CHECKPOINT);
    let text = fs::read_to_string(&path)
        .with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    let ckpt = Checkpoint::from_json(&text)
        .with_context(|| format!("invalid checkpoint {}", path.display()))?;
    let part: Part = s.or(a.split.map(Part::from), "split", Part::Test)?;
    let data: PathBuf = match s.pick(a.data, "data")? {
        Some(d) => d,
        None => ckpt
            .data
            .clone()
            .map(PathBuf::from)
            .context("checkpoint does not record its dataset; pass --data")?,
    };
    let out = a.out.unwrap_or_else(|| a.run.clone());

    let records = load_records(&data)?;
    let selected = ckpt.split.select(&records, part)?;
    let features = build_features(
        &selected,
        ckpt.task,
        &ckpt.attributes,
        Some(&ckpt.norm),
        &ckpt.pipeline,
    )?;
    let ev = evaluate(&ckpt.model, &features)?;

    ensure_dir(&out)?;
    let last = match ckpt.task {
        Task::Classify => "correct",
        Task::Predict => "abs_pct_error",
    };
    let mut csv = Csv::new(&["battery_id", "truth", "prediction", last])?;
    for ((id, &truth), &pred) in ev.ids.iter().zip(&ev.truth).zip(&ev.predictions) {
        let score = match ckpt.task {
            Task::Classify => u8::from(predicted_class(pred) == truth).to_string(),
            Task::Predict => (100.0 * (pred - truth).abs() / truth).to_string(),
        };
        csv.row([id.clone(), truth.to_string(), pred.to_string(), score])?;
    }
    csv.save(&out.join(PREDICTIONS))?;

    if ckpt.task == Task::Classify {
        let mut fade = Csv::new(&[
            "battery_id",
            "cycle",
            "discharge_capacity",
            "true_class",
            "predicted_class",
        ])?;
        for (rec, (&truth, &pred)) in selected.iter().zip(ev.truth.iter().zip(&ev.predictions)) {
            for (i, c) in rec.cycles.iter().enumerate() {
                fade.row([
                    rec.id.clone(),
                    (i + 1).to_string(),
                    c.max_capacity().to_string(),
                    truth.to_string(),
                    predicted_class(pred).to_string(),
                ])?;
            }
        }
        fade.save(&out.join(FADE_CURVES))?;
    }

    let name = metric_name(ckpt.task);
    println!("split: {} ({} batteries)", part.name(), ev.ids.len());
    println!("{name}: {}", format_metric(ev.metric));
    println!("{name}_exact: {}", ev.metric);
    Ok(())
}
