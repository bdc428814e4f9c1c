use super::record::{BatteryRecord, Task};
use crate::error::{Error, Result};

/// End of life: discharge capacity below this fraction of nominal.
pub const END_OF_LIFE_FRACTION: f64 = 0.8;

/// Batteries living strictly longer than this are "good".
pub const GOOD_THRESHOLD: u32 = 700;

/// First (1-based) cycle whose peak discharge capacity drops below 80% of
/// nominal.
pub fn compute_cycle_life(record: &BatteryRecord) -> Result<u32> {
    if !(record.nominal_capacity > 0.0) {
        return Err(Error::Field {
            battery: record.id.clone(),
            field: "nominal_capacity".into(),
            detail: "must be positive".into(),
        });
    }
    let floor = END_OF_LIFE_FRACTION * record.nominal_capacity;
    record
        .cycles
        .iter()
        .position(|c| c.max_capacity() < floor)
        .map(|i| i as u32 + 1)
        .ok_or_else(|| Error::Censored(record.id.clone()))
}

/// Classification: `1.0` iff cycle life exceeds `threshold`.
/// Prediction: the cycle life itself.
pub fn make_labels(records: &[BatteryRecord], task: Task, threshold: u32) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            let life = r
                .cycle_life
                .ok_or_else(|| Error::MissingCycleLife(r.id.clone()))?;
            Ok(match task {
                Task::Classify => f64::from(u8::from(life > threshold)),
                Task::Predict => f64::from(life),
            })
        })
        .collect()
}
