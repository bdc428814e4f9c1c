use super::clean::{clean_cycle, OutlierConfig};
use super::record::{Attribute, BatteryRecord, CycleData, Reduction, Variable, N_ATTRIBUTES};
use crate::error::{Error, Result};

/// Mean, population variance, min and max of one series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub var: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn get(&self, r: Reduction) -> f64 {
        match r {
            Reduction::Mean => self.mean,
            Reduction::Var => self.var,
            Reduction::Min => self.min,
            Reduction::Max => self.max,
        }
    }
}

pub fn summarize(series: &[f64]) -> Option<Summary> {
    if series.is_empty() {
        return None;
    }
    let n = series.len() as f64;
    let (min, max) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    // Rounding can push the sum of identical values past them.
    let mean = (series.iter().sum::<f64>() / n).clamp(min, max);
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(Summary {
        mean,
        var,
        min,
        max,
    })
}

/// The 24 attributes of one cycle in [`Attribute::all`] order.
pub fn reduce_cycle(cycle: &CycleData) -> Result<[f64; N_ATTRIBUTES]> {
    let mut out = [0.0; N_ATTRIBUTES];
    for var in Variable::ALL {
        let s = summarize(cycle.series(var))
            .ok_or_else(|| Error::Data(format!("cannot reduce empty {} series", var.key())))?;
        for r in Reduction::ALL {
            out[Attribute::new(r, var).index()] = s.get(r);
        }
    }
    Ok(out)
}

/// Per-cycle attributes of one battery.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeMatrix {
    pub battery_id: String,
    pub rows: Vec<[f64; N_ATTRIBUTES]>,
}

impl AttributeMatrix {
    pub fn attribute_names() -> Vec<String> {
        Attribute::all().iter().map(ToString::to_string).collect()
    }

    pub fn value(&self, cycle_index: usize, attr: Attribute) -> f64 {
        self.rows[cycle_index][attr.index()]
    }
}

/// Reduces the first `max_cycles` cycles (all when `None`), cleaning each
/// cycle first when `cleaning` is given.
pub fn attribute_matrix(
    record: &BatteryRecord,
    max_cycles: Option<usize>,
    cleaning: Option<&OutlierConfig>,
) -> Result<AttributeMatrix> {
    let take = max_cycles
        .unwrap_or(record.cycles.len())
        .min(record.cycles.len());
    let rows = record.cycles[..take]
        .iter()
        .map(|c| reduce_one(&record.id, c, cleaning))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttributeMatrix {
        battery_id: record.id.clone(),
        rows,
    })
}

pub(crate) fn reduce_one(
    id: &str,
    cycle: &CycleData,
    cleaning: Option<&OutlierConfig>,
) -> Result<[f64; N_ATTRIBUTES]> {
    let reduced = match cleaning {
        Some(cfg) => reduce_cycle(&clean_cycle(cycle, cfg)?),
        None => reduce_cycle(cycle),
    };
    reduced.map_err(|e| Error::Data(format!("battery {id}: {e}")))
}
