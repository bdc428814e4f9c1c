pub mod eval;
pub mod plot;
pub mod rank;
pub mod synth;
pub mod train;

use std::path::Path;

use anyhow::Context;
use cyclelife_core::datapipe::{load_dataset, BatteryRecord};

pub(crate) fn load_records(dir: &Path) -> anyhow::Result<Vec<BatteryRecord>> {
    let records =
        load_dataset(dir).with_context(|| format!("cannot load dataset {}", dir.display()))?;
    if records.is_empty() {
        anyhow::bail!("dataset {} contains no batteries", dir.display());
    }
    Ok(records)
}

pub(crate) fn positive(value: u64, name: &str) -> anyhow::Result<usize> {
    if value == 0 {
        return Err(crate::settings::usage(format!(
            "--{name} must be at least 1"
        )));
    }
    Ok(value as usize)
}
