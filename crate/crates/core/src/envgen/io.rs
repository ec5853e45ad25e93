//! Serialization: specs as JSON, datasets as CSV.
//!
//! Dataset CSV schema: header `x0..x{d-1},y,env_id`, one row per sample.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Dataset, EnvId, FeatureSpec};
use crate::error::{Error, Result};

pub fn load_spec(path: impl AsRef<Path>) -> Result<FeatureSpec> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_spec(spec: &FeatureSpec, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(spec)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes datasets into one CSV. All datasets must share a feature
/// dimension; rows keep dataset order.
pub fn write_datasets_csv(path: impl AsRef<Path>, datasets: &[Dataset]) -> Result<()> {
    let first = datasets
        .first()
        .ok_or(Error::EmptyInput("no datasets to write"))?;
    let d = first.dim();
    if let Some(bad) = datasets.iter().find(|ds| ds.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.dim(),
            context: "dataset feature dimensions",
        });
    }
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    header.push("env_id".into());
    wtr.write_record(&header)?;
    for ds in datasets {
        for i in 0..ds.n() {
            let mut rec: Vec<String> = (0..d).map(|j| ds.x()[[i, j]].to_string()).collect();
            rec.push(ds.y()[i].to_string());
            rec.push(ds.env_id().to_string());
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a combined CSV back into per-environment datasets, in order of
/// first appearance.
pub fn read_datasets_csv(path: impl AsRef<Path>) -> Result<Vec<Dataset>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let d = header.len().checked_sub(2).ok_or(Error::InvalidSpec(
        "dataset CSV needs x columns, y and env_id".into(),
    ))?;
    if d == 0 || header.get(d) != Some("y") || header.get(d + 1) != Some("env_id") {
        return Err(Error::InvalidSpec(
            "dataset CSV header must be x0..x{d-1},y,env_id".into(),
        ));
    }
    let mut order: Vec<EnvId> = Vec::new();
    let mut rows: BTreeMap<EnvId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let env = EnvId::from(record.get(d + 1).unwrap_or_default());
        let entry = rows.entry(env.clone()).or_insert_with(|| {
            order.push(env.clone());
            (Vec::new(), Vec::new())
        });
        for j in 0..d {
            let v: f64 = record
                .get(j)
                .unwrap_or_default()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("non-numeric value in column x{j}")))?;
            entry.0.push(v);
        }
        let y: f64 = record
            .get(d)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::InvalidSpec("non-numeric label".into()))?;
        entry.1.push(y);
    }
    order
        .into_iter()
        .map(|env| {
            let (xs, ys) = rows.remove(&env).expect("recorded env");
            let n = ys.len();
            let x = Array2::from_shape_vec((n, d), xs)
                .map_err(|e| Error::InvalidSpec(e.to_string()))?;
            Dataset::new(x, Array1::from_vec(ys), env)
        })
        .collect()
}
