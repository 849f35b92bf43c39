//! Spectral features of an IFS, the numeric matrix they assemble into, and
//! correlation-based feature selection.
//!
//! Each map contributes its singular spectrum, determinant magnitude,
//! condition number, and spectral gaps; a system is summarized by the mean and
//! sum of each per-map quantity. These are the inputs both to the learned
//! filter and to the importance/pruning analysis workflow.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::IfsSystem;

/// Canonical column order for feature CSVs and model schemas.
pub const FEATURE_COLUMNS: [&str; 16] = [
    "n",
    "sum_abs_det",
    "mean_abs_det",
    "mean_abs_det_over_n",
    "mean_kappa",
    "mean_sigma3",
    "mean_sig12_diff",
    "mean_sig13_diff",
    "mean_sigma1",
    "mean_sigma2",
    "sum_sigma1",
    "sum_sigma2",
    "sum_sigma3",
    "sum_kappa",
    "sum_sig12_diff",
    "sum_sig13_diff",
];

pub const LABEL_COLUMN: &str = "label";

/// Default cap on pairwise correlation during pruning.
pub const DEFAULT_MAX_CORR: f64 = 0.8;
/// Default size of the pruned feature set.
pub const DEFAULT_TOP_K: usize = 5;

/// Spectral quantities of a single map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapFeatures {
    /// Singular values, descending.
    pub sigma: [f64; 3],
    pub abs_det: f64,
    /// Condition number sigma1/sigma3; infinite for rank-deficient maps.
    pub kappa: f64,
    pub sig12_diff: f64,
    pub sig13_diff: f64,
}

/// Features of one system: per-map detail plus symmetric aggregates.
///
/// Infinite condition numbers are kept as sentinels in `per_map` but excluded
/// from `mean_kappa`/`sum_kappa`; `kappa_exclusions` counts how many maps were
/// left out so the aggregate is never silently poisoned.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub n: usize,
    pub per_map: Vec<MapFeatures>,
    pub kappa_exclusions: usize,
    pub sum_sigma1: f64,
    pub sum_sigma2: f64,
    pub sum_sigma3: f64,
    pub sum_abs_det: f64,
    pub sum_kappa: f64,
    pub sum_sig12_diff: f64,
    pub sum_sig13_diff: f64,
    pub mean_sigma1: f64,
    pub mean_sigma2: f64,
    pub mean_sigma3: f64,
    pub mean_abs_det: f64,
    pub mean_kappa: f64,
    pub mean_sig12_diff: f64,
    pub mean_sig13_diff: f64,
    /// (mean |det|) / n — the per-map determinant mass relative to system size.
    pub mean_abs_det_over_n: f64,
}

impl FeatureVector {
    /// Numeric row in [`FEATURE_COLUMNS`] order.
    pub fn numeric_row(&self) -> [f64; 16] {
        [
            self.n as f64,
            self.sum_abs_det,
            self.mean_abs_det,
            self.mean_abs_det_over_n,
            self.mean_kappa,
            self.mean_sigma3,
            self.mean_sig12_diff,
            self.mean_sig13_diff,
            self.mean_sigma1,
            self.mean_sigma2,
            self.sum_sigma1,
            self.sum_sigma2,
            self.sum_sigma3,
            self.sum_kappa,
            self.sum_sig12_diff,
            self.sum_sig13_diff,
        ]
    }
}

/// Extract the feature vector of a system.
///
/// Per-map singular values come from the full decomposition; the determinant
/// magnitude is computed independently by cofactor expansion (the two agree to
/// 1e-9, which the tests enforce as a cross-check).
pub fn extract(system: &IfsSystem) -> FeatureVector {
    let n = system.n();
    let per_map: Vec<MapFeatures> = system
        .maps()
        .iter()
        .map(|m| {
            let sigma = m.a.svd().sigma;
            let kappa = if sigma[2] > 0.0 {
                sigma[0] / sigma[2]
            } else {
                f64::INFINITY
            };
            MapFeatures {
                sigma,
                abs_det: m.a.determinant().abs(),
                kappa,
                sig12_diff: sigma[0] - sigma[1],
                sig13_diff: sigma[0] - sigma[2],
            }
        })
        .collect();

    let nf = n as f64;
    let sum = |f: fn(&MapFeatures) -> f64| per_map.iter().map(f).sum::<f64>();
    let sum_sigma1 = sum(|m| m.sigma[0]);
    let sum_sigma2 = sum(|m| m.sigma[1]);
    let sum_sigma3 = sum(|m| m.sigma[2]);
    let sum_abs_det = sum(|m| m.abs_det);
    let sum_sig12_diff = sum(|m| m.sig12_diff);
    let sum_sig13_diff = sum(|m| m.sig13_diff);

    let finite_kappas: Vec<f64> = per_map
        .iter()
        .map(|m| m.kappa)
        .filter(|k| k.is_finite())
        .collect();
    let kappa_exclusions = n - finite_kappas.len();
    let sum_kappa = finite_kappas.iter().sum::<f64>();
    let mean_kappa = if finite_kappas.is_empty() {
        0.0
    } else {
        sum_kappa / finite_kappas.len() as f64
    };

    let mean_abs_det = sum_abs_det / nf;
    FeatureVector {
        n,
        kappa_exclusions,
        sum_sigma1,
        sum_sigma2,
        sum_sigma3,
        sum_abs_det,
        sum_kappa,
        sum_sig12_diff,
        sum_sig13_diff,
        mean_sigma1: sum_sigma1 / nf,
        mean_sigma2: sum_sigma2 / nf,
        mean_sigma3: sum_sigma3 / nf,
        mean_abs_det,
        mean_kappa,
        mean_sig12_diff: sum_sig12_diff / nf,
        mean_sig13_diff: sum_sig13_diff / nf,
        mean_abs_det_over_n: mean_abs_det / nf,
        per_map,
    }
}

/// Binary quality annotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Good,
    Bad,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Good => "good",
            Label::Bad => "bad",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "good" => Ok(Label::Good),
            "bad" => Ok(Label::Bad),
            other => Err(Error::InvalidInput(format!(
                "unknown label {other:?} (expected \"good\" or \"bad\")"
            ))),
        }
    }
}

/// A numeric feature table with optional labels — what classifiers consume.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<Label>>,
}

impl FeatureMatrix {
    pub fn from_vectors(vectors: &[FeatureVector], labels: Option<Vec<Label>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != vectors.len() {
                return Err(Error::InvalidInput(format!(
                    "{} labels for {} rows",
                    l.len(),
                    vectors.len()
                )));
            }
        }
        Ok(FeatureMatrix {
            columns: FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            rows: vectors.iter().map(|v| v.numeric_row().to_vec()).collect(),
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Write as CSV: header, then one row per system; a trailing `label`
    /// column is present iff labels are attached.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let mut header: Vec<&str> = self.columns.iter().map(|s| s.as_str()).collect();
        if self.labels.is_some() {
            header.push(LABEL_COLUMN);
        }
        w.write_record(&header)
            .map_err(|e| Error::format(path, e.to_string()))?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(labels) = &self.labels {
                rec.push(labels[i].to_string());
            }
            w.write_record(&rec)
                .map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let header = r
            .headers()
            .map_err(|e| Error::format(path, e.to_string()))?
            .clone();
        let mut columns: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        let labeled = columns.last().map(|c| c == LABEL_COLUMN).unwrap_or(false);
        if labeled {
            columns.pop();
        }
        if columns.is_empty() {
            return Err(Error::format(path, "no feature columns"));
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
            if rec.len() != columns.len() + usize::from(labeled) {
                return Err(Error::format(
                    path,
                    format!("row {} has {} fields, expected {}", line + 2, rec.len(), columns.len() + usize::from(labeled)),
                ));
            }
            let mut row = Vec::with_capacity(columns.len());
            for v in rec.iter().take(columns.len()) {
                row.push(
                    v.parse::<f64>()
                        .map_err(|e| Error::format(path, format!("row {}: {e}", line + 2)))?,
                );
            }
            if labeled {
                labels.push(rec[columns.len()].parse::<Label>().map_err(|e| {
                    Error::format(path, format!("row {}: {e}", line + 2))
                })?);
            }
            rows.push(row);
        }
        Ok(FeatureMatrix {
            columns,
            rows,
            labels: labeled.then_some(labels),
        })
    }
}

/// Pearson correlation matrix over the feature columns.
///
/// Columns with zero variance carry no correlation information; by convention
/// their entire row/column (diagonal included) is 0 and their indices are
/// reported in `degenerate`. Healthy diagonals are exactly 1.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub values: Vec<Vec<f64>>,
    pub degenerate: Vec<usize>,
}

pub fn correlation_matrix(m: &FeatureMatrix) -> Result<CorrelationMatrix> {
    let n = m.n_rows();
    if n < 2 {
        return Err(Error::InvalidInput(
            "correlation needs at least 2 rows".into(),
        ));
    }
    let d = m.n_cols();
    let nf = n as f64;
    let means: Vec<f64> = (0..d)
        .map(|j| m.rows.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();
    let vars: Vec<f64> = (0..d)
        .map(|j| {
            m.rows
                .iter()
                .map(|r| (r[j] - means[j]).powi(2))
                .sum::<f64>()
                / nf
        })
        .collect();
    let degenerate: Vec<usize> = (0..d).filter(|&j| vars[j] <= 0.0).collect();

    let mut values = vec![vec![0.0; d]; d];
    for i in 0..d {
        if vars[i] <= 0.0 {
            continue;
        }
        values[i][i] = 1.0;
        for j in i + 1..d {
            if vars[j] <= 0.0 {
                continue;
            }
            let cov = m
                .rows
                .iter()
                .map(|r| (r[i] - means[i]) * (r[j] - means[j]))
                .sum::<f64>()
                / nf;
            let c = (cov / (vars[i] * vars[j]).sqrt()).clamp(-1.0, 1.0);
            values[i][j] = c;
            values[j][i] = c;
        }
    }
    Ok(CorrelationMatrix { values, degenerate })
}

/// Greedy correlation pruning.
///
/// Walk `ranking` (feature indices, best first); a feature joins the selection
/// iff its absolute correlation with every already-selected feature is at most
/// `max_corr`. Stops at `k` features; returns fewer when the ranking runs out,
/// which callers can detect from the length.
pub fn correlation_prune(
    ranking: &[usize],
    corr: &CorrelationMatrix,
    max_corr: f64,
    k: usize,
) -> Vec<usize> {
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    for &f in ranking {
        if selected.len() == k {
            break;
        }
        if selected
            .iter()
            .all(|&s| corr.values[f][s].abs() <= max_corr)
        {
            selected.push(f);
        }
    }
    selected
}
