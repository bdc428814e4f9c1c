use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};

use crate::output::{ensure_dir, write_file};
use crate::settings::Settings;
use crate::svg::{render, Chart, Series};
use crate::{PlotArgs, PlotKind};

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &PathBuf) -> anyhow::Result<Table> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .with_context(|| format!("{}: malformed header", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        bail!("{}: need at least two columns", path.display());
    }
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .with_context(|| format!("{}: malformed row", path.display()))?;
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(Table { header, rows })
}

impl Table {
    fn column(&self, name: &str) -> anyhow::Result<usize> {
        self.header.iter().position(|h| h == name).with_context(|| {
            format!(
                "no column named {name:?}; columns are {}",
                self.header.join(", ")
            )
        })
    }

    fn numeric(&self, j: usize) -> Option<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r[j].trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect()
    }

    fn values(&self, j: usize) -> anyhow::Result<Vec<f64>> {
        self.numeric(j)
            .with_context(|| format!("column {:?} has non-numeric values", self.header[j]))
    }
}

pub fn run(s: &Settings, a: PlotArgs) -> anyhow::Result<()> {
    let kind = s.pick::<String>(None, "kind")?;
    let kind = match (a.kind, kind.as_deref()) {
        (Some(k), _) => k,
        (None, None | Some("scatter")) => PlotKind::Scatter,
        (None, Some("line")) => PlotKind::Line,
        (None, Some(other)) => {
            return Err(crate::settings::usage(format!(
                "unknown plot kind {other:?}"
            )))
        }
    };
    let table = read_table(&a.input)?;
    let xj = match a.x.as_deref() {
        Some(name) => table.column(name)?,
        None => 0,
    };
    let yjs: Vec<usize> = match a.y.as_deref() {
        Some(list) => list
            .split(',')
            .map(|n| table.column(n.trim()))
            .collect::<anyhow::Result<_>>()?,
        None => match kind {
            PlotKind::Scatter => vec![if xj == 0 { 1 } else { 0 }],
            PlotKind::Line => (0..table.header.len())
                .filter(|&j| j != xj && table.numeric(j).is_some())
                .collect(),
        },
    };
    if yjs.is_empty() {
        bail!("no numeric columns to plot");
    }
    let xs = table.values(xj)?;
    let series = yjs
        .iter()
        .map(|&j| {
            Ok(Series {
                name: table.header[j].clone(),
                points: xs.iter().copied().zip(table.values(j)?).collect(),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let title = a
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let chart = Chart {
        title,
        x_label: table.header[xj].clone(),
        lines: kind == PlotKind::Line,
        series,
    };
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_file(&a.out, render(&chart).as_bytes())?;
    println!("wrote {} ({} rows)", a.out.display(), table.rows.len());
    Ok(())
}
