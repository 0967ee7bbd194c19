//! CSV panels, draw files, histograms and JSON artefacts.
//!
//! A panel file has the header `region,week,y,<media...>,<nuisance...>`
//! with one row per region and week. By default media columns are the
//! ones whose names start with `x` and nuisance columns those starting
//! with `z`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use mmm_core::diagnostics::Histogram;
use mmm_core::model::PanelDataset;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Which header columns hold media and nuisance variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnSelection {
    pub media: Option<Vec<String>>,
    pub nuisance: Option<Vec<String>>,
}

pub fn load_panel(path: &Path) -> Result<PanelDataset> {
    load_panel_with(path, &ColumnSelection::default())
}

pub fn load_panel_with(path: &Path, columns: &ColumnSelection) -> Result<PanelDataset> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_panel(file, columns)
}

/// Parses a panel from any reader.
pub fn read_panel<R: std::io::Read>(reader: R, columns: &ColumnSelection) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::ingest(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let position = |name: &str| header.iter().position(|h| h == name);
    for required in ["region", "week", "y"] {
        if position(required).is_none() {
            return Err(CliError::ingest(format!(
                "header lacks the required column `{required}`"
            )));
        }
    }
    let pick = |given: &Option<Vec<String>>, prefix: char| -> Result<Vec<String>> {
        match given {
            Some(names) => {
                if let Some(missing) = names.iter().find(|n| position(n).is_none()) {
                    return Err(CliError::config(format!(
                        "column `{missing}` is not in the panel header"
                    )));
                }
                Ok(names.clone())
            }
            None => Ok(header
                .iter()
                .filter(|h| h.starts_with(prefix) && !["region", "week", "y"].contains(&h.as_str()))
                .cloned()
                .collect()),
        }
    };
    let media = pick(&columns.media, 'x')?;
    let nuisance = pick(&columns.nuisance, 'z')?;
    if media.is_empty() {
        return Err(CliError::ingest(
            "no media columns found (expected names starting with `x`)",
        ));
    }
    let (i_region, i_week, i_y) = (
        position("region").unwrap(),
        position("week").unwrap(),
        position("y").unwrap(),
    );
    let media_idx: Vec<usize> = media.iter().map(|n| position(n).unwrap()).collect();
    let nuisance_idx: Vec<usize> = nuisance.iter().map(|n| position(n).unwrap()).collect();

    // region -> week -> (y, x.., z..)
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, BTreeMap<i64, Vec<f64>>> = HashMap::new();
    for (line, record) in rdr.records().enumerate() {
        let row = line + 2;
        let record = record.map_err(|e| CliError::ingest(format!("row {row}: {e}")))?;
        let cell = |idx: usize| -> Result<&str> {
            match record.get(idx) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(CliError::ingest(format!(
                    "row {row}, column `{}`: missing value",
                    header[idx]
                ))),
            }
        };
        let number = |idx: usize| -> Result<f64> {
            let raw = cell(idx)?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    CliError::ingest(format!(
                        "row {row}, column `{}`: `{raw}` is not a finite number",
                        header[idx]
                    ))
                })
        };
        let region = cell(i_region)?.to_owned();
        let week_raw = cell(i_week)?;
        let week: i64 = week_raw.parse().map_err(|_| {
            CliError::ingest(format!(
                "row {row}, column `week`: `{week_raw}` is not an integer"
            ))
        })?;
        let mut values = vec![number(i_y)?];
        for &i in media_idx.iter().chain(&nuisance_idx) {
            values.push(number(i)?);
        }
        if !rows.contains_key(&region) {
            order.push(region.clone());
        }
        if rows
            .entry(region.clone())
            .or_default()
            .insert(week, values)
            .is_some()
        {
            return Err(CliError::ingest(format!(
                "row {row}: region {region} repeats week {week}"
            )));
        }
    }
    if order.is_empty() {
        return Err(CliError::ingest("panel has no data rows"));
    }

    // Every region must cover the same contiguous run of weeks.
    let start = order
        .iter()
        .map(|r| *rows[r].keys().next().unwrap())
        .min()
        .unwrap();
    let end = order
        .iter()
        .map(|r| *rows[r].keys().next_back().unwrap())
        .max()
        .unwrap();
    let w = (end - start + 1) as usize;
    for region in &order {
        let weeks = &rows[region];
        if weeks.len() != w {
            let missing = (start..=end).find(|wk| !weeks.contains_key(wk)).unwrap();
            return Err(CliError::ingest(format!(
                "ragged panel: region {region} has no row for week {missing}"
            )));
        }
    }

    let (g, m, n) = (order.len(), media.len(), nuisance.len());
    let mut y = Vec::with_capacity(g * w);
    let mut x = vec![0.0; g * m * w];
    let mut z = vec![0.0; g * n * w];
    for (r, region) in order.iter().enumerate() {
        for (t, values) in rows[region].values().enumerate() {
            y.push(values[0]);
            for i in 0..m {
                x[(r * m + i) * w + t] = values[1 + i];
            }
            for j in 0..n {
                z[(r * n + j) * w + t] = values[1 + m + j];
            }
        }
    }
    PanelDataset::new(order, media, nuisance, w, y, x, z)
        .map_err(|e| CliError::ingest(e.to_string()))
}

/// Writes a panel in canonical form: regions in order, weeks `1..=w`,
/// shortest round-trip float formatting.
pub fn save_panel(path: &Path, data: &PanelDataset) -> Result<()> {
    fs::write(path, panel_to_string(data)).map_err(|e| CliError::io(path, e))
}

pub fn panel_to_string(data: &PanelDataset) -> String {
    let mut out = String::from("region,week,y");
    for name in data.media_names().iter().chain(data.nuisance_names()) {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (r, region) in data.regions().iter().enumerate() {
        for t in 0..data.weeks() {
            out.push_str(&format!("{region},{},{}", t + 1, data.y(r)[t]));
            for i in 0..data.m() {
                out.push_str(&format!(",{}", data.x(r, i)[t]));
            }
            for j in 0..data.n() {
                out.push_str(&format!(",{}", data.z(r, j)[t]));
            }
            out.push('\n');
        }
    }
    out
}

/// One row per draw, one column per parameter.
pub fn write_draws(path: &Path, names: &[String], draws: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(names).map_err(|e| CliError::io(path, e))?;
    for d in draws {
        w.write_record(d.iter().map(|v| v.to_string()))
            .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_draws(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::io(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut draws = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec =
            rec.map_err(|e| CliError::ingest(format!("{} row {}: {e}", path.display(), line + 2)))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| CliError::ingest(format!("{} row {}: {e}", path.display(), line + 2)))?;
        draws.push(row);
    }
    Ok((names, draws))
}

/// `beta[1,2]` becomes `beta_1_2`.
pub fn file_stem(param: &str) -> String {
    let mut s: String = param
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    while s.ends_with('_') {
        s.pop();
    }
    s
}

pub fn write_histogram(path: &Path, h: &Histogram) -> Result<()> {
    let mut out = String::from("bin,lower,upper,count\n");
    for (b, count) in h.counts.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            b + 1,
            h.edges[b],
            h.edges[b + 1],
            count
        ));
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::ingest(format!("{}: {e}", path.display())))
}
