use std::path::PathBuf;

use cyclelife_core::datapipe::{FeatureSelection, OutlierConfig, PipelineOptions, Task};
use cyclelife_core::trainer::{
    format_metric, metric_name, run_experiment, AdamConfig, ExperimentConfig, Part, RunReport,
    TrainConfig,
};
use cyclelife_core::Error;

use super::{load_records, positive};
use crate::output::{ensure_dir, write_file};
use crate::settings::{usage, Settings};
use crate::{Switch, TrainArgs};

pub const CHECKPOINT: &str = "checkpoint.json";
pub const REPORT: &str = "report.json";
pub const HISTORY: &str = "history.csv";

fn experiment_config(s: &Settings, a: &TrainArgs) -> anyhow::Result<ExperimentConfig> {
    let task: Task = match a.task {
        Some(t) => t.into(),
        None => s.required::<Task>(None, "task")?,
    };
    let attention = match a.attention {
        Some(sw) => matches!(sw, Switch::On),
        None => match s.pick::<String>(None, "attention")?.as_deref() {
            None | Some("off") => false,
            Some("on") => true,
            Some(other) => {
                return Err(usage(format!(
                    "config key `attention` must be \"on\" or \"off\", got {other:?}"
                )))
            }
        },
    };
    let defaults = TrainConfig::default();
    let clip = s.or(a.clip_norm, "clip_norm", defaults.clip_norm.unwrap_or(0.0))?;
    let train = TrainConfig {
        epochs: positive(s.or(a.epochs, "epochs", defaults.epochs as u64)?, "epochs")?,
        adam: AdamConfig {
            learning_rate: s.or(a.lr, "lr", defaults.adam.learning_rate)?,
            ..defaults.adam
        },
        batch_size: s
            .pick(a.batch_size, "batch_size")?
            .map(|b| positive(b, "batch-size"))
            .transpose()?,
        seed: s.seed(a.seed, "seed")?,
        early_stop: s
            .pick(a.early_stop, "early_stop")?
            .map(|p| positive(p, "early-stop"))
            .transpose()?,
        clip_norm: (clip != 0.0).then_some(clip),
        log_target: s.flag(a.log_target, "log_target")?,
    };
    train.validate().map_err(|e| usage(e.to_string()))?;
    let selection = match s.pick(a.top_k, "top_k")? {
        Some(k) if (1..=24).contains(&k) => FeatureSelection::TopK(k as usize),
        Some(k) => return Err(usage(format!("--top-k must be between 1 and 24, got {k}"))),
        None => FeatureSelection::Default,
    };
    let model_seed = train.seed;
    Ok(ExperimentConfig {
        task,
        selection,
        pipeline: PipelineOptions {
            outliers: (!s.flag(a.no_outliers, "no_outliers")?).then(OutlierConfig::default),
            ..PipelineOptions::default()
        },
        split_seed: s.seed(a.split_seed, "split_seed")?,
        attention,
        model_seed,
        train,
    })
}

fn print_metrics(report: &RunReport) {
    let name = metric_name(report.task);
    if let Some(best) = report.best_epoch {
        println!("best epoch: {best} of {}", report.history.len());
    }
    for part in Part::ALL {
        if let Some(m) = report.metrics.get(part) {
            println!("{} {name}: {}", part.name(), format_metric(m.metric));
        }
    }
}

pub fn run(s: &Settings, a: TrainArgs) -> anyhow::Result<()> {
    let cfg = experiment_config(s, &a)?;
    let data: PathBuf = s.required(a.data.clone(), "data")?;
    let records = load_records(&data)?;
    ensure_dir(&a.out)?;

    let exp = match run_experiment(&records, &cfg) {
        Ok(exp) => exp,
        Err(Error::Diverged {
            epoch,
            last_finite,
            report,
        }) => {
            write_file(&a.out.join(REPORT), report.to_json()?.as_bytes())?;
            write_file(&a.out.join(HISTORY), report.history_csv().as_bytes())?;
            let last = last_finite.map_or("none".to_string(), |e| e.to_string());
            anyhow::bail!("training diverged at epoch {epoch} (last finite epoch: {last}); partial report written");
        }
        Err(e) => return Err(e.into()),
    };

    let mut checkpoint = exp.checkpoint;
    let data_path = std::fs::canonicalize(&data).unwrap_or(data);
    checkpoint.data = Some(data_path.to_string_lossy().into_owned());
    write_file(&a.out.join(CHECKPOINT), checkpoint.to_json()?.as_bytes())?;
    write_file(&a.out.join(REPORT), exp.report.to_json()?.as_bytes())?;
    write_file(&a.out.join(HISTORY), exp.report.history_csv().as_bytes())?;

    let split = &checkpoint.split;
    println!(
        "split {}/{}/{} (seed {})",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        split.seed
    );
    print_metrics(&exp.report);
    println!("wrote {}", a.out.display());
    Ok(())
}
