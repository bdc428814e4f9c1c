use std::path::PathBuf;

use cyclelife_core::datapipe::{attribute_deltas, rank_from_deltas, tier_of, OutlierConfig};

use super::load_records;
use crate::output::{ensure_dir, Csv};
use crate::settings::Settings;
use crate::RankArgs;

pub fn run(s: &Settings, a: RankArgs) -> anyhow::Result<()> {
    let data: PathBuf = s.required(a.data, "data")?;
    let out: PathBuf = s.or(a.out, "out", PathBuf::from("ranks.csv"))?;
    let cleaning = (!s.flag(a.no_outliers, "no_outliers")?).then(OutlierConfig::default);

    let records = load_records(&data)?;
    let table = attribute_deltas(&records, cleaning.as_ref())?;
    let ranking = rank_from_deltas(&table)?;

    let dir = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(PathBuf::from)
        .unwrap_or_default();
    if !dir.as_os_str().is_empty() {
        ensure_dir(&dir)?;
    }
    let mut csv = Csv::new(&["attribute", "score", "tier"])?;
    for (i, r) in ranking.iter().enumerate() {
        csv.row([
            r.attribute.to_string(),
            r.score.to_string(),
            tier_of(i).to_string(),
        ])?;
    }
    csv.save(&out)?;

    for attr in ranking.iter().map(|r| r.attribute) {
        let mut scatter = Csv::new(&["delta", "cycle_life", "battery_id"])?;
        for ((id, delta), life) in table
            .ids
            .iter()
            .zip(table.column(attr))
            .zip(&table.cycle_lives)
        {
            scatter.row([delta.to_string(), life.to_string(), id.clone()])?;
        }
        scatter.save(&dir.join(format!("scatter_{}.csv", attr.file_stem())))?;
    }

    for r in ranking.iter().take(3) {
        println!("{:<14} {:.3}", r.attribute.to_string(), r.score);
    }
    println!(
        "wrote {} and {} scatter files",
        out.display(),
        ranking.len()
    );
    Ok(())
}
