//! Datasets and the member / non-member / population splits that define the
//! membership inference game.
//!
//! The CSV dialect is deliberately restricted: UTF-8, comma separators, one
//! header line, decimal-point floats, no quoting or escaping. Cells that
//! would need quoting (embedded commas) are rejected rather than parsed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{AuditError, Result};
use crate::rng;

/// A feature matrix plus integer class labels; the unit audited records live in.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `n_records x n_features`, 64-bit floats, all finite.
    pub features: Array2<f64>,
    /// One class index per record, each in `0..num_classes`.
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Column names when the dataset came from a CSV file.
    pub feature_names: Option<Vec<String>>,
}

impl LabeledDataset {
    /// Validating constructor; every public producer goes through here.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(AuditError::ShapeMismatch(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(AuditError::InvalidArgument("num_classes is zero".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(AuditError::InvalidLabel(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(AuditError::InvalidArgument(
                "non-finite feature value".into(),
            ));
        }
        if let Some(names) = &feature_names {
            if names.len() != features.ncols() {
                return Err(AuditError::ShapeMismatch(format!(
                    "{} feature names vs {} columns",
                    names.len(),
                    features.ncols()
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            feature_names,
        })
    }

    pub fn n_records(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Gather the feature rows at `idx` into a new matrix.
    pub fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), idx)
    }

    /// Gather the labels at `idx`.
    pub fn labels_at(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    /// Per-feature standardization to zero mean and unit variance.
    ///
    /// Deliberately not applied by any loader: rescaling changes the loss
    /// values the attacks observe, so it has to be an explicit opt-in.
    /// Constant columns are left centered (divisor clamped to 1).
    pub fn standardize(&self) -> LabeledDataset {
        let n = self.n_records() as f64;
        let mut features = self.features.clone();
        for mut col in features.columns_mut() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
            col.mapv_inplace(|v| (v - mean) / sd);
        }
        LabeledDataset {
            features,
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Disjoint member / non-member / population index sets over one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditSplit {
    /// Records the target trains on; sorted ascending.
    pub member_idx: Vec<usize>,
    /// Held-out records the attacker must distinguish from members; sorted.
    pub nonmember_idx: Vec<usize>,
    /// Everything else; the attacker's world knowledge. Sorted.
    pub population_idx: Vec<usize>,
    pub seed: u64,
}

impl AuditSplit {
    /// Member and non-member ids merged, ascending; the canonical audit order.
    pub fn audited_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> =
            self.member_idx.iter().chain(&self.nonmember_idx).copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn is_member(&self, id: usize) -> bool {
        self.member_idx.binary_search(&id).is_ok()
    }
}

/// Gaussian blobs with controllable class separation.
///
/// Class `c` is drawn from a unit-variance Gaussian centered at
/// `sep * (1 + c / d) * e_(c mod d)`, i.e. the means walk outward along the
/// coordinate axes. `sep = 0` collapses all classes onto one distribution.
/// Records are emitted class by class; bit-identical for equal seeds.
pub fn generate_synthetic(
    n_per_class: usize,
    n_features: usize,
    num_classes: usize,
    class_separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_per_class == 0 || n_features == 0 {
        return Err(AuditError::InvalidArgument(
            "n_per_class and n_features must be positive".into(),
        ));
    }
    if num_classes < 2 {
        return Err(AuditError::InvalidArgument(
            "num_classes must be at least 2".into(),
        ));
    }
    if !class_separation.is_finite() || class_separation < 0.0 {
        return Err(AuditError::InvalidArgument(
            "class_separation must be finite and non-negative".into(),
        ));
    }

    let mut rng = rng::stream(seed, "synthetic", 0);
    let n = n_per_class * num_classes;
    let mut features = Array2::<f64>::zeros((n, n_features));
    let mut labels = Vec::with_capacity(n);
    for c in 0..num_classes {
        let axis = c % n_features;
        let offset = class_separation * (1 + c / n_features) as f64;
        for i in 0..n_per_class {
            let row = c * n_per_class + i;
            for j in 0..n_features {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let mean = if j == axis { offset } else { 0.0 };
                features[[row, j]] = mean + noise;
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(features, labels, num_classes, None)
}

/// Load a CSV file, remapping labels to contiguous integers in order of
/// first appearance.
///
/// All non-label columns must be finite numbers. Rows whose field count
/// differs from the header are rejected, which also rejects any cell that
/// would have needed comma escaping.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    let mut lines = text.lines();

    let header = lines
        .next()
        .ok_or_else(|| AuditError::Schema(format!("{}: no header line", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_col = columns
        .iter()
        .position(|&c| c == label_column)
        .ok_or_else(|| {
            AuditError::Schema(format!(
                "label column '{label_column}' not found in header [{}]",
                columns.join(", ")
            ))
        })?;
    let feature_names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_col)
        .map(|(_, c)| c.to_string())
        .collect();

    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut n_rows = 0usize;

    for (row_idx, line) in lines.enumerate() {
        let row = row_idx + 1; // 1-based data row, header not counted
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(AuditError::Parse {
                row,
                column: String::new(),
                message: format!(
                    "expected {} fields, found {} (quoted or comma-containing cells are not supported)",
                    columns.len(),
                    cells.len()
                ),
            });
        }
        for (col_idx, cell) in cells.iter().enumerate() {
            if col_idx == label_col {
                let label = match label_names.iter().position(|n| n == cell) {
                    Some(k) => k,
                    None => {
                        label_names.push((*cell).to_string());
                        label_names.len() - 1
                    }
                };
                labels.push(label);
            } else {
                let value: f64 = cell.parse().map_err(|_| AuditError::Parse {
                    row,
                    column: columns[col_idx].to_string(),
                    message: format!("'{cell}' is not a number"),
                })?;
                if !value.is_finite() {
                    return Err(AuditError::Parse {
                        row,
                        column: columns[col_idx].to_string(),
                        message: format!("'{cell}' is not finite"),
                    });
                }
                features.push(value);
            }
        }
        n_rows += 1;
    }

    if n_rows == 0 {
        return Err(AuditError::EmptyDataset(format!(
            "{}: header only, no data rows",
            path.display()
        )));
    }

    let n_features = columns.len() - 1;
    let features = Array2::from_shape_vec((n_rows, n_features), features)
        .expect("row-major collection matches declared shape");
    LabeledDataset::new(features, labels, label_names.len(), Some(feature_names))
}

/// Write a dataset in the same restricted CSV dialect `load_csv` reads.
///
/// Floats carry 17 significant digits, so a load round-trips them exactly;
/// labels are written as their integer class indices.
pub fn save_csv(dataset: &LabeledDataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let names: Vec<String> = match &dataset.feature_names {
        Some(names) => names.clone(),
        None => (0..dataset.n_features()).map(|j| format!("f{j}")).collect(),
    };
    out.push_str(&names.join(","));
    out.push(',');
    out.push_str(label_column);
    out.push('\n');
    for (row, &label) in dataset.features.rows().into_iter().zip(&dataset.labels) {
        for v in row.iter() {
            let _ = write!(out, "{v:.16e},");
        }
        let _ = writeln!(out, "{label}");
    }
    fs::write(path, out).map_err(|e| AuditError::io(path, e))
}

/// Sample disjoint member and non-member sets without replacement; every
/// remaining record becomes population. Deterministic given the seed.
pub fn make_audit_split(
    dataset: &LabeledDataset,
    n_members: usize,
    n_nonmembers: usize,
    seed: u64,
) -> Result<AuditSplit> {
    let n = dataset.n_records();
    if n_members == 0 || n_nonmembers == 0 {
        return Err(AuditError::InvalidArgument(
            "member and non-member counts must be positive".into(),
        ));
    }
    if n_members + n_nonmembers > n {
        return Err(AuditError::InvalidArgument(format!(
            "requested {} members + {} non-members from {} records",
            n_members, n_nonmembers, n
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, "audit-split", 0);
    order.shuffle(&mut rng);

    let mut member_idx: Vec<usize> = order[..n_members].to_vec();
    let mut nonmember_idx: Vec<usize> = order[n_members..n_members + n_nonmembers].to_vec();
    let mut population_idx: Vec<usize> = order[n_members + n_nonmembers..].to_vec();
    member_idx.sort_unstable();
    nonmember_idx.sort_unstable();
    population_idx.sort_unstable();

    Ok(AuditSplit {
        member_idx,
        nonmember_idx,
        population_idx,
        seed,
    })
}
