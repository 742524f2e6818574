//! CSV and JSON readers and writers.
//!
//! Portfolio files are comma separated UTF-8 with a mandatory header row and
//! `.` as decimal mark. Columns are matched to the schema by name; extra
//! columns are ignored. Rows are identified by their 0-based position in the
//! file, which is the `row_id` used by claims tables and prediction files.
//! Error messages count data rows from 1.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use pricing_core::data::{Claim, ColumnKind, ColumnSchema, Dataset, Target};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn load_csv(path: &Path, schema: &ColumnSchema) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("opening portfolio {}", path.display()))?;
    read_portfolio(file, schema).with_context(|| format!("in portfolio {}", path.display()))
}

pub fn read_portfolio<R: Read>(reader: R, schema: &ColumnSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let position: Vec<usize> = schema
        .columns()
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h.trim() == c.name)
                .ok_or_else(|| anyhow!("missing column `{}`", c.name))
        })
        .collect::<Result<_>>()?;
    let specs = schema.columns();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); specs.len()];
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.with_context(|| format!("data row {row}: malformed record"))?;
        for (k, spec) in specs.iter().enumerate() {
            let cell = record
                .get(position[k])
                .ok_or_else(|| anyhow!("data row {row}: missing cell for `{}`", spec.name))?
                .trim();
            let v = match spec.kind {
                ColumnKind::Categorical => match spec.levels.iter().position(|l| l == cell) {
                    Some(l) => l as f64,
                    None => bail!(
                        "data row {row}: label `{cell}` of `{}` is not among the declared levels",
                        spec.name
                    ),
                },
                _ => match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => bail!("data row {row}: cannot parse `{cell}` in `{}` as a number", spec.name),
                },
            };
            if spec.kind == ColumnKind::Exposure && !(v > 0.0) {
                bail!("data row {row}: exposure must be strictly positive, got {v}");
            }
            values[k].push(v);
        }
    }
    let n = values.first().map_or(0, Vec::len);
    let column_of = |kind: ColumnKind| specs.iter().position(|c| c.kind == kind).map(|k| values[k].clone());
    let response = column_of(ColumnKind::Response).unwrap_or_default();
    let exposure = column_of(ColumnKind::Exposure);
    let counts = column_of(ColumnKind::ClaimCount);
    let features = schema.features();
    let columns: Vec<Vec<f64>> = specs
        .iter()
        .zip(&values)
        .filter(|(c, _)| matches!(c.kind, ColumnKind::Continuous | ColumnKind::Categorical))
        .map(|(_, v)| v.clone())
        .collect();
    let built = match schema.target() {
        Target::Frequency => Dataset::frequency(features, columns, exposure.unwrap_or_else(|| vec![1.0; n]), response),
        Target::Severity => Dataset::severity(features, columns, response, counts.unwrap_or_else(|| vec![1.0; n])),
    };
    built.map_err(|e| match e {
        pricing_core::Error::Row { row, message } => anyhow!("data row {}: {message}", row + 1),
        e => e.into(),
    })
}

/// Writes a portfolio back out with categorical labels, followed by the
/// exposure and claim count columns named as in `schema`.
pub fn write_portfolio(path: &Path, data: &Dataset, schema: &ColumnSchema) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let name = |kind| schema.find(kind).map(|c| c.name.clone());
    let exposure = name(ColumnKind::Exposure).unwrap_or_else(|| "exposure".into());
    let response = name(ColumnKind::Response).unwrap_or_else(|| "nclaims".into());
    let mut header: Vec<String> = data.features().iter().map(|f| f.name.clone()).collect();
    header.push(exposure);
    header.push(response);
    w.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut rec: Vec<String> = data
            .features()
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let v = data.column(j)[i];
                if f.is_categorical() {
                    f.levels()[v as usize].clone()
                } else {
                    v.to_string()
                }
            })
            .collect();
        rec.push(data.exposure()[i].to_string());
        rec.push(data.response()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize, Serialize)]
struct ClaimRecord {
    row_id: usize,
    amount: f64,
}

pub fn load_claims(path: &Path) -> Result<Vec<Claim>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening claims table {}", path.display()))?;
    rdr.deserialize::<ClaimRecord>()
        .enumerate()
        .map(|(i, r)| {
            let r = r.with_context(|| format!("claims table {} data row {}", path.display(), i + 1))?;
            Ok(Claim {
                row_id: r.row_id,
                amount: r.amount,
            })
        })
        .collect()
}

pub fn write_claims(path: &Path, claims: &[Claim]) -> Result<()> {
    let rows: Vec<ClaimRecord> = claims
        .iter()
        .map(|c| ClaimRecord {
            row_id: c.row_id,
            amount: c.amount,
        })
        .collect();
    write_csv(path, &rows)
}

/// Serialises `rows` with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an artifact written by `stage`; a missing file names the stage.
pub fn read_csv<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<Vec<T>> {
    require(path, stage)?;
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize()
        .map(|r| r.with_context(|| format!("reading {}", path.display())))
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<T> {
    require(path, stage)?;
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn require(path: &Path, stage: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing artifact {}; run the `{stage}` stage first", path.display());
    }
    Ok(())
}
