//! The `cyclelife-v1` dataset directory.
//!
//! One JSON document per battery (`<id>.json`) plus `manifest.json`
//! listing the ids. Floats are written in shortest round-trip form, so a
//! load after a save reproduces every value bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::record::{BatteryRecord, CycleData, Variable};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "cyclelife-v1";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub batteries: Vec<String>,
}

#[derive(Serialize)]
struct BatteryDoc<'a> {
    format: &'a str,
    id: &'a str,
    nominal_capacity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cycle_life: Option<u32>,
    cycles: &'a [CycleData],
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "manifest"
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.')
}

pub fn battery_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

pub fn battery_to_json(record: &BatteryRecord) -> Result<Vec<u8>> {
    let doc = BatteryDoc {
        format: FORMAT_VERSION,
        id: &record.id,
        nominal_capacity: record.nominal_capacity,
        cycle_life: record.cycle_life,
        cycles: &record.cycles,
    };
    let mut bytes = serde_json::to_vec(&doc)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes every record plus the manifest into `dir` (created if missing).
pub fn save_dataset(dir: &Path, records: &[BatteryRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut ids = Vec::with_capacity(records.len());
    for r in records {
        if !valid_id(&r.id) {
            return Err(Error::Field {
                battery: r.id.clone(),
                field: "id".into(),
                detail: "ids may only contain ASCII letters, digits, '-', '_' and '.'".into(),
            });
        }
        if ids.contains(&r.id) {
            return Err(Error::Data(format!("duplicate battery id {}", r.id)));
        }
        write_atomic(&battery_path(dir, &r.id), &battery_to_json(r)?)?;
        ids.push(r.id.clone());
    }
    let manifest = Manifest {
        format: FORMAT_VERSION.into(),
        batteries: ids,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_atomic(&dir.join(MANIFEST), &bytes)
}

/// Loads every battery in `dir`. Without a manifest, all `*.json` files are
/// read in name order; an empty directory yields no records.
pub fn load_dataset(dir: &Path) -> Result<Vec<BatteryRecord>> {
    let manifest_path = dir.join(MANIFEST);
    let files: Vec<(Option<String>, PathBuf)> = if manifest_path.exists() {
        let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?)
            .map_err(|e| Error::Data(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported dataset format `{}` (expected `{FORMAT_VERSION}`)",
                manifest.format
            )));
        }
        manifest
            .batteries
            .into_iter()
            .map(|id| {
                let path = battery_path(dir, &id);
                (Some(id), path)
            })
            .collect()
    } else {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.into_iter().map(|p| (None, p)).collect()
    };
    files
        .into_iter()
        .map(|(expected, path)| {
            let label = expected.clone().unwrap_or_else(|| {
                path.file_stem()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned()
            });
            let bytes = fs::read(&path).map_err(|e| Error::Field {
                battery: label.clone(),
                field: "<file>".into(),
                detail: format!("{}: {e}", path.display()),
            })?;
            let record = parse_battery(&bytes, &label)?;
            if let Some(id) = expected {
                if record.id != id {
                    return Err(Error::Field {
                        battery: id,
                        field: "id".into(),
                        detail: format!("file declares id `{}`", record.id),
                    });
                }
            }
            Ok(record)
        })
        .collect()
}

fn field_err(battery: &str, field: impl Into<String>, detail: impl Into<String>) -> Error {
    Error::Field {
        battery: battery.to_string(),
        field: field.into(),
        detail: detail.into(),
    }
}

fn number_array(value: Option<&Value>, battery: &str, field: &str) -> Result<Vec<f64>> {
    let arr = value
        .ok_or_else(|| field_err(battery, field, "missing"))?
        .as_array()
        .ok_or_else(|| field_err(battery, field, "expected an array of numbers"))?;
    if arr.is_empty() {
        return Err(field_err(battery, field, "series is empty"));
    }
    arr.iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_f64()
                .ok_or_else(|| field_err(battery, field, format!("element {i} is not a number")))
        })
        .collect()
}

/// Parses and validates one battery document. `label` names the battery in
/// errors until the document's own id is known.
pub fn parse_battery(bytes: &[u8], label: &str) -> Result<BatteryRecord> {
    let doc: Value =
        serde_json::from_slice(bytes).map_err(|e| field_err(label, "<document>", e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| field_err(label, "<document>", "expected a JSON object"))?;
    if let Some(fmt) = obj.get("format") {
        if fmt.as_str() != Some(FORMAT_VERSION) {
            return Err(field_err(
                label,
                "format",
                format!("unsupported format {fmt}"),
            ));
        }
    }
    let id = obj
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| field_err(label, "id", "missing or not a string"))?
        .to_string();
    let nominal_capacity = obj
        .get("nominal_capacity")
        .and_then(Value::as_f64)
        .ok_or_else(|| field_err(&id, "nominal_capacity", "missing or not a number"))?;
    if !(nominal_capacity > 0.0) {
        return Err(field_err(&id, "nominal_capacity", "must be positive"));
    }
    let cycle_life = match obj.get("cycle_life") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let life = v
                .as_u64()
                .filter(|&n| n > 0 && n <= u32::MAX as u64)
                .ok_or_else(|| field_err(&id, "cycle_life", "must be a positive integer"))?;
            Some(life as u32)
        }
    };
    let raw_cycles = obj
        .get("cycles")
        .and_then(Value::as_array)
        .ok_or_else(|| field_err(&id, "cycles", "missing or not an array"))?;
    if raw_cycles.is_empty() {
        return Err(field_err(&id, "cycles", "no cycles recorded"));
    }
    let mut cycles = Vec::with_capacity(raw_cycles.len());
    let mut grid = None;
    for (i, c) in raw_cycles.iter().enumerate() {
        let get = |var: Variable| {
            number_array(c.get(var.key()), &id, &format!("cycles[{i}].{}", var.key()))
        };
        let cycle = CycleData {
            t: get(Variable::T)?,
            v: get(Variable::V)?,
            qd: get(Variable::Qd)?,
            qd_lin: get(Variable::QdLin)?,
            td_lin: get(Variable::TdLin)?,
            dqdv: get(Variable::DqDv)?,
        };
        let g = cycle.qd_lin.len();
        if cycle.td_lin.len() != g {
            return Err(field_err(
                &id,
                format!("cycles[{i}].Td_lin"),
                format!(
                    "grid length {} differs from Qd_lin's {g}",
                    cycle.td_lin.len()
                ),
            ));
        }
        match grid {
            None => grid = Some(g),
            Some(expected) if expected != g => {
                return Err(field_err(
                    &id,
                    format!("cycles[{i}].Qd_lin"),
                    format!("grid length {g} differs from earlier cycles' {expected}"),
                ))
            }
            _ => {}
        }
        cycles.push(cycle);
    }
    Ok(BatteryRecord {
        id,
        nominal_capacity,
        cycle_life,
        cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> CycleData {
        let s = |k: f64| (0..n).map(|i| k + i as f64 * 0.1).collect::<Vec<_>>();
        CycleData {
            t: s(30.0),
            v: s(3.0),
            qd: s(0.0),
            qd_lin: s(0.5),
            td_lin: s(29.0),
            dqdv: s(-1.0 / 3.0),
        }
    }

    fn record(id: &str) -> BatteryRecord {
        BatteryRecord {
            id: id.into(),
            nominal_capacity: 1.1,
            cycle_life: Some(812),
            cycles: vec![cycle(4), cycle(4)],
        }
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = record("b1");
        r.cycles[0].t[0] = 0.1 + 0.2;
        r.cycles[1].dqdv[2] = std::f64::consts::PI * 1e-300;
        save_dataset(dir.path(), &[r.clone(), record("b2")]).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back[0], r);
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn missing_series_is_named() {
        let mut v = serde_json::to_value(record("cell7")).unwrap();
        v["cycles"][1].as_object_mut().unwrap().remove("V");
        let err = parse_battery(v.to_string().as_bytes(), "x")
            .unwrap_err()
            .to_string();
        assert!(err.contains("cell7") && err.contains(".V"), "{err}");
    }

    #[test]
    fn mismatched_grid_rejected() {
        let mut r = record("g");
        r.cycles[1].td_lin.pop();
        let err = parse_battery(&battery_to_json(&r).unwrap(), "g")
            .unwrap_err()
            .to_string();
        assert!(err.contains("Td_lin"), "{err}");
    }

    #[test]
    fn wrong_manifest_version() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(MANIFEST),
            r#"{"format":"v0","batteries":[]}"#,
        )
        .unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn rejects_unsafe_ids() {
        let dir = tempfile::tempdir().unwrap();
        assert!(save_dataset(dir.path(), &[record("../evil")]).is_err());
    }
}
