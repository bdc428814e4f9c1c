//! Attribute ranking by how an attribute's drift between cycle 10 and
//! cycle 100 tracks log cycle life.

use serde::{Deserialize, Serialize};

use super::clean::OutlierConfig;
use super::record::{Attribute, BatteryRecord, N_ATTRIBUTES};
use super::reduce::reduce_one;
use crate::error::{Error, Result};

pub const EARLY_CYCLE: usize = 10;
pub const LATE_CYCLE: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeScore {
    pub attribute: Attribute,
    pub score: f64,
}

/// `attr(cycle 100) - attr(cycle 10)` for every battery.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaTable {
    pub ids: Vec<String>,
    pub deltas: Vec<[f64; N_ATTRIBUTES]>,
    pub cycle_lives: Vec<u32>,
}

impl DeltaTable {
    pub fn column(&self, attr: Attribute) -> Vec<f64> {
        self.deltas.iter().map(|row| row[attr.index()]).collect()
    }
}

pub fn attribute_deltas(
    records: &[BatteryRecord],
    cleaning: Option<&OutlierConfig>,
) -> Result<DeltaTable> {
    let mut table = DeltaTable {
        ids: Vec::with_capacity(records.len()),
        deltas: Vec::with_capacity(records.len()),
        cycle_lives: Vec::with_capacity(records.len()),
    };
    for r in records {
        if r.cycles.len() < LATE_CYCLE {
            return Err(Error::TooFewCycles {
                battery: r.id.clone(),
                have: r.cycles.len(),
                need: LATE_CYCLE,
            });
        }
        let life = r
            .cycle_life
            .ok_or_else(|| Error::MissingCycleLife(r.id.clone()))?;
        let early = reduce_one(&r.id, &r.cycles[EARLY_CYCLE - 1], cleaning)?;
        let late = reduce_one(&r.id, &r.cycles[LATE_CYCLE - 1], cleaning)?;
        let mut delta = [0.0; N_ATTRIBUTES];
        for (d, (l, e)) in delta.iter_mut().zip(late.iter().zip(&early)) {
            *d = l - e;
        }
        table.ids.push(r.id.clone());
        table.deltas.push(delta);
        table.cycle_lives.push(life);
    }
    Ok(table)
}

/// Pearson correlation; zero when either side has no spread.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let spread = |s: f64, v: &[f64]| {
        let scale = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        s.sqrt() > 1e-12 * scale.max(f64::MIN_POSITIVE) * n.sqrt()
    };
    if !spread(sxx, x) || !spread(syy, y) {
        return 0.0;
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    if r.is_finite() {
        r
    } else {
        0.0
    }
}

/// Scores every attribute by `|pearson(Δattr, log10(cycle life))|`, highest
/// first; ties keep attribute order. Summation runs in battery-id order so
/// the result does not depend on the order of `table`.
pub fn rank_from_deltas(table: &DeltaTable) -> Result<Vec<AttributeScore>> {
    if table.ids.len() < 3 {
        return Err(Error::Data(format!(
            "ranking needs at least 3 batteries, got {}",
            table.ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..table.ids.len()).collect();
    order.sort_by(|&a, &b| table.ids[a].cmp(&table.ids[b]).then(a.cmp(&b)));
    let log_life: Vec<f64> = order
        .iter()
        .map(|&i| f64::from(table.cycle_lives[i]).log10())
        .collect();
    let mut scores: Vec<AttributeScore> = Attribute::all()
        .into_iter()
        .map(|attribute| {
            let col: Vec<f64> = order
                .iter()
                .map(|&i| table.deltas[i][attribute.index()])
                .collect();
            AttributeScore {
                attribute,
                score: pearson(&col, &log_life).abs(),
            }
        })
        .collect();
    scores.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(scores)
}

pub fn rank_attributes(
    records: &[BatteryRecord],
    cleaning: Option<&OutlierConfig>,
) -> Result<Vec<AttributeScore>> {
    if records.len() < 3 {
        return Err(Error::Data(format!(
            "ranking needs at least 3 batteries, got {}",
            records.len()
        )));
    }
    rank_from_deltas(&attribute_deltas(records, cleaning)?)
}

/// Tier label by rank position: 3 top, 12 middle, the rest bottom.
pub fn tier_of(rank: usize) -> &'static str {
    match rank {
        0..=2 => "top",
        3..=14 => "middle",
        _ => "bottom",
    }
}
