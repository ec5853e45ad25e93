//! Tabular ingestion with environment binning.
//!
//! Pipeline: keep numeric columns only, drop columns whose missing
//! fraction exceeds a threshold, drop remaining rows with missing values,
//! bin rows into environments by a meta column, and normalize features
//! and labels to zero mean / unit variance using statistics fitted on the
//! training bins only. Constant columns are dropped (zero variance breaks
//! normalization). Missing markers are the empty string and `NA`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::envgen::{Dataset, EnvId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularConfig {
    pub meta_column: String,
    pub target_column: String,
    /// Columns excluded up front (identifiers and the like).
    pub drop_columns: Vec<String>,
    /// Ascending bin edges over the meta column; bin `i` is
    /// `[edge_i, edge_{i+1})`, the last bin closed on the right.
    pub bin_edges: Vec<f64>,
    /// The first `train_bins` bins are training environments, the rest
    /// test environments.
    pub train_bins: usize,
    /// Numeric columns missing more than this fraction of values are
    /// dropped instead of forcing row drops.
    pub max_missing_fraction: f64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        TabularConfig {
            meta_column: "YearBuilt".into(),
            target_column: "SalePrice".into(),
            drop_columns: vec!["Id".into()],
            bin_edges: (0..=10).map(|i| 1910.0 + 10.0 * i as f64).collect(),
            train_bins: 6,
            max_missing_fraction: 0.05,
        }
    }
}

impl TabularConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bin_edges.len() < 2 {
            return Err(Error::InvalidParameter("need at least two bin edges".into()));
        }
        if self.bin_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("bin edges must be strictly ascending".into()));
        }
        let bins = self.bin_edges.len() - 1;
        if self.train_bins == 0 || self.train_bins > bins {
            return Err(Error::InvalidParameter(format!(
                "train_bins must be in 1..={bins}, got {}",
                self.train_bins
            )));
        }
        if !(0.0..1.0).contains(&self.max_missing_fraction) {
            return Err(Error::InvalidParameter(
                "max_missing_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn bin_label(&self, bin: usize) -> String {
        format!(
            "{}-{}",
            fmt_edge(self.bin_edges[bin]),
            fmt_edge(self.bin_edges[bin + 1])
        )
    }
}

pub(crate) fn fmt_edge(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Normalization statistics fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub label_mean: f64,
    pub label_std: f64,
}

/// Environments produced by binning a table, normalized with
/// training-bin statistics.
#[derive(Debug, Clone)]
pub struct TabularEnvSet {
    pub train: Vec<Dataset>,
    pub test: Vec<Dataset>,
    pub feature_names: Vec<String>,
    pub normalization: Normalization,
    /// Columns removed along the way (non-numeric, too many missing,
    /// constant), with the reason.
    pub dropped_columns: Vec<(String, String)>,
}

impl TabularEnvSet {
    pub fn train_labels(&self) -> Vec<EnvId> {
        self.train.iter().map(|d| d.env_id().clone()).collect()
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Reads, cleans, bins, and normalizes a CSV into environments.
pub fn ingest_tabular(path: impl AsRef<std::path::Path>, config: &TabularConfig) -> Result<TabularEnvSet> {
    config.validate()?;
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let meta_idx = find(&config.meta_column)?;
    let target_idx = find(&config.target_column)?;

    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    if rows.is_empty() {
        return Err(Error::EmptyInput("tabular CSV has no data rows"));
    }

    let mut dropped: Vec<(String, String)> = Vec::new();
    // candidate feature columns: numeric, not meta/target/excluded, not
    // missing-heavy
    let mut feature_idx: Vec<usize> = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if j == meta_idx || j == target_idx || config.drop_columns.contains(name) {
            continue;
        }
        let mut missing = 0usize;
        let mut numeric = true;
        for row in &rows {
            let cell = row.get(j).unwrap_or_default();
            if is_missing(cell) {
                missing += 1;
            } else if cell.parse::<f64>().is_err() {
                numeric = false;
                break;
            }
        }
        if !numeric {
            dropped.push((name.clone(), "non-numeric".into()));
            continue;
        }
        if missing as f64 / rows.len() as f64 > config.max_missing_fraction {
            dropped.push((name.clone(), "missing values".into()));
            log::warn!("dropping column {name}: more than {:.0}% missing", config.max_missing_fraction * 100.0);
            continue;
        }
        feature_idx.push(j);
    }
    if feature_idx.is_empty() {
        return Err(Error::InvalidSpec("no numeric feature columns survive".into()));
    }

    // row-wise parse; drop rows with any missing value or out-of-range meta
    let bins = config.bin_edges.len() - 1;
    let lo = config.bin_edges[0];
    let hi = *config.bin_edges.last().unwrap();
    let mut binned: Vec<Vec<(Vec<f64>, f64)>> = vec![Vec::new(); bins];
    let mut dropped_rows = 0usize;
    for row in &rows {
        let meta_cell = row.get(meta_idx).unwrap_or_default();
        let target_cell = row.get(target_idx).unwrap_or_default();
        if is_missing(meta_cell) || is_missing(target_cell) {
            dropped_rows += 1;
            continue;
        }
        let meta: f64 = match meta_cell.parse() {
            Ok(v) => v,
            Err(_) => {
                return Err(Error::InvalidSpec(format!(
                    "meta column {} has non-numeric value {meta_cell}",
                    config.meta_column
                )))
            }
        };
        let target: f64 = match target_cell.parse() {
            Ok(v) => v,
            Err(_) => {
                return Err(Error::InvalidSpec(format!(
                    "target column {} has non-numeric value {target_cell}",
                    config.target_column
                )))
            }
        };
        if meta < lo || meta > hi {
            dropped_rows += 1;
            continue;
        }
        let mut features = Vec::with_capacity(feature_idx.len());
        let mut missing = false;
        for &j in &feature_idx {
            let cell = row.get(j).unwrap_or_default();
            if is_missing(cell) {
                missing = true;
                break;
            }
            features.push(cell.parse::<f64>().expect("screened numeric"));
        }
        if missing {
            dropped_rows += 1;
            continue;
        }
        let bin = if meta >= hi {
            bins - 1
        } else {
            config
                .bin_edges
                .windows(2)
                .position(|w| meta >= w[0] && meta < w[1])
                .expect("meta within range")
        };
        binned[bin].push((features, target));
    }
    if dropped_rows > 0 {
        log::warn!("dropped {dropped_rows} rows (missing values or meta out of range)");
    }
    if binned.iter().all(|b| b.is_empty()) {
        return Err(Error::EmptyInput("all rows were dropped during ingestion"));
    }
    if binned[..config.train_bins].iter().all(|b| b.is_empty()) {
        return Err(Error::EmptyInput("no training rows survive binning"));
    }

    // constant-column screen and normalization statistics on pooled
    // training rows
    let train_rows: Vec<&(Vec<f64>, f64)> =
        binned[..config.train_bins].iter().flatten().collect();
    let n_train = train_rows.len() as f64;
    let mut keep: Vec<usize> = Vec::new();
    let mut means: Vec<f64> = Vec::new();
    let mut stds: Vec<f64> = Vec::new();
    for (pos, &j) in feature_idx.iter().enumerate() {
        let mean = train_rows.iter().map(|(f, _)| f[pos]).sum::<f64>() / n_train;
        let var = train_rows
            .iter()
            .map(|(f, _)| (f[pos] - mean) * (f[pos] - mean))
            .sum::<f64>()
            / n_train;
        let std = var.sqrt();
        if std < 1e-12 {
            dropped.push((header[j].clone(), "constant".into()));
            log::warn!("dropping constant column {}", header[j]);
            continue;
        }
        keep.push(pos);
        means.push(mean);
        stds.push(std);
    }
    if keep.is_empty() {
        return Err(Error::InvalidSpec("all feature columns are constant".into()));
    }
    let label_mean = train_rows.iter().map(|(_, y)| *y).sum::<f64>() / n_train;
    let label_var = train_rows
        .iter()
        .map(|(_, y)| (*y - label_mean) * (*y - label_mean))
        .sum::<f64>()
        / n_train;
    let label_std = label_var.sqrt();
    if label_std < 1e-12 {
        return Err(Error::InvalidSpec("target column is constant on training rows".into()));
    }

    let feature_names: Vec<String> = keep.iter().map(|&pos| header[feature_idx[pos]].clone()).collect();
    let normalization = Normalization {
        feature_means: means.clone(),
        feature_stds: stds.clone(),
        label_mean,
        label_std,
    };

    let build = |bin: usize, rows: &[(Vec<f64>, f64)]| -> Result<Dataset> {
        let n = rows.len();
        let d = keep.len();
        let mut x = Array2::zeros((n, d));
        let mut y = Array1::zeros(n);
        for (i, (features, target)) in rows.iter().enumerate() {
            for (col, &pos) in keep.iter().enumerate() {
                x[[i, col]] = (features[pos] - means[col]) / stds[col];
            }
            y[i] = (target - label_mean) / label_std;
        }
        Dataset::new(x, y, EnvId(config.bin_label(bin)))
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (bin, rows) in binned.iter().enumerate() {
        if rows.is_empty() {
            log::warn!("bin {} is empty; skipping", config.bin_label(bin));
            continue;
        }
        let ds = build(bin, rows)?;
        if bin < config.train_bins {
            train.push(ds);
        } else {
            test.push(ds);
        }
    }

    Ok(TabularEnvSet {
        train,
        test,
        feature_names,
        normalization,
        dropped_columns: dropped,
    })
}
