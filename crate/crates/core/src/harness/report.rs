//! Report emission. Every recipe writes `report.json` shaped as
//! `{ "meta": ..., "data": ... }`: the meta block isolates everything
//! non-deterministic (timestamps, versions), so the data block and all
//! CSV side files are byte-identical across reruns with the same config
//! and seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::invariant::Predictor;
use crate::stats;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMeta {
    pub created_unix: u64,
    pub tool_version: String,
    pub recipe: String,
    pub seed: u64,
    pub seeds: usize,
}

impl ReportMeta {
    pub fn new(recipe: &str, seed: u64, seeds: usize) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        ReportMeta {
            created_unix,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            recipe: recipe.to_string(),
            seed,
            seeds,
        }
    }
}

/// Mean and sample standard deviation over per-seed values, stored next
/// to the raw values so any aggregate can be recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
}

impl SeedAggregate {
    pub fn from_values(values: Vec<f64>) -> Self {
        SeedAggregate {
            mean: stats::mean(&values),
            std: stats::sample_std(&values),
            per_seed: values,
        }
    }
}

/// Writes `{meta, data}` as pretty JSON and returns the path.
pub fn write_report_json<T: Serialize>(
    out_dir: &Path,
    meta: &ReportMeta,
    data: &T,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("report.json");
    #[derive(Serialize)]
    struct Wrapper<'a, T: Serialize> {
        meta: &'a ReportMeta,
        data: &'a T,
    }
    let text = serde_json::to_string_pretty(&Wrapper { meta, data })?;
    std::fs::write(&path, text)?;
    Ok(path)
}

/// One aggregated result-table row (fixed column order:
/// `model,training_range,avg_mse,avg_mse_std,worst_group_mse,worst_group_mse_std`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub training_range: String,
    pub avg_mse: f64,
    pub avg_mse_std: f64,
    pub worst_group_mse: f64,
    pub worst_group_mse_std: f64,
}

pub fn write_results_csv(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record([
        "model",
        "training_range",
        "avg_mse",
        "avg_mse_std",
        "worst_group_mse",
        "worst_group_mse_std",
    ])?;
    for row in rows {
        wtr.write_record([
            row.model.clone(),
            row.training_range.clone(),
            row.avg_mse.to_string(),
            row.avg_mse_std.to_string(),
            row.worst_group_mse.to_string(),
            row.worst_group_mse_std.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Single-run table row in result-table column order
/// (`model,training_range,avg_mse,worst_group_mse`).
pub fn write_single_result_csv(
    path: impl AsRef<Path>,
    model: &str,
    training_range: &str,
    report: &crate::invariant::RiskReport,
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["model", "training_range", "avg_mse", "worst_group_mse"])?;
    wtr.write_record([
        model.to_string(),
        training_range.to_string(),
        report.avg.to_string(),
        report.worst_group.to_string(),
    ])?;
    wtr.flush()?;
    Ok(())
}

/// Objective traces: `model,seed,iteration,objective`.
pub fn write_traces_csv(
    path: impl AsRef<Path>,
    traces: &[(String, u64, Vec<f64>)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["model", "seed", "iteration", "objective"])?;
    for (model, seed, trace) in traces {
        for (iter, value) in trace.iter().enumerate() {
            wtr.write_record([
                model.clone(),
                seed.to_string(),
                iter.to_string(),
                value.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Suppression-ratio trajectories: `model,seed,iteration,ratio_block1,ratio_block2`.
pub fn write_ratio_trajectories_csv(
    path: impl AsRef<Path>,
    rows: &[(String, u64, usize, f64, f64)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["model", "seed", "iteration", "ratio_block1", "ratio_block2"])?;
    for (model, seed, iter, r1, r2) in rows {
        wtr.write_record([
            model.clone(),
            seed.to_string(),
            iter.to_string(),
            r1.to_string(),
            r2.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `{phi: [...], meta: {...}}` predictor document.
pub fn write_predictor_json(
    path: impl AsRef<Path>,
    predictor: &Predictor,
    meta: serde_json::Value,
) -> Result<()> {
    let doc = serde_json::json!({
        "phi": predictor.phi().to_vec(),
        "meta": meta,
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}
