//! Small deterministic models used as score predictors.
//!
//! Two fitters are provided: least-squares gradient-boosted regression
//! trees ([`fit_boosted_trees`]) and L2-regularized logistic regression
//! ([`fit_logistic`]). Both are fully deterministic given their inputs;
//! fitted boosted-trees models are additionally invariant to the row order
//! of the training data (every aggregation is performed in a value-sorted
//! order).
//!
//! Models serialize to a self-describing versioned JSON file via
//! `save`/`load` on each model type.

mod boosting;
mod logistic;
mod tree;

pub use boosting::{
    fit_boosted_trees, fit_multi_output_boosted_trees, BoostedTreesModel, BoostedTreesParams,
    MultiOutputBoostedTrees,
};
pub use logistic::{fit_logistic, fit_logistic_with, LogisticModel, LogisticParams};

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

/// Current on-disk model format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile<T> {
    format: String,
    version: u32,
    model: T,
}

fn save_model<T: Serialize>(path: &Path, format: &str, model: &T) -> Result<()> {
    let file = ModelFile {
        format: format.to_string(),
        version: MODEL_FORMAT_VERSION,
        model,
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::invalid(format!("model serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn load_model<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile<T> = serde_json::from_str(&text).map_err(|e| {
        Error::invalid(format!("cannot parse model file {}: {e}", path.display()))
    })?;
    if file.format != format {
        return Err(Error::invalid(format!(
            "model file {} has format '{}', expected '{format}'",
            path.display(),
            file.format
        )));
    }
    if file.version != MODEL_FORMAT_VERSION {
        return Err(Error::invalid(format!(
            "model file {} has version {}, expected {MODEL_FORMAT_VERSION}",
            path.display(),
            file.version
        )));
    }
    Ok(file.model)
}

/// Mean computed over a value-sorted copy, so the result does not depend
/// on the order the values arrive in.
pub(crate) fn stable_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / values.len() as f64
}

/// A dense supervised dataset: `n_rows x n_cols` features plus one target
/// per row. NaN entries are rejected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    targets: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from row-major features.
    pub fn new(features: Vec<f64>, n_cols: usize, targets: Vec<f64>) -> Result<Self> {
        let n_rows = targets.len();
        if n_cols == 0 && !features.is_empty() {
            return Err(Error::invalid("n_cols = 0 with non-empty features"));
        }
        if n_cols > 0 && features.len() != n_rows * n_cols {
            return Err(Error::invalid(format!(
                "feature matrix has {} entries, expected {} rows x {} cols",
                features.len(),
                n_rows,
                n_cols
            )));
        }
        if features.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("feature matrix contains NaN"));
        }
        if targets.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("target vector contains NaN"));
        }
        Ok(Self {
            features,
            n_rows,
            n_cols,
            targets,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::invalid(format!(
                "got {} feature rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let n_cols = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().position(|r| r.len() != n_cols) {
            return Err(Error::invalid(format!(
                "feature row {bad} has length {}, expected {n_cols}",
                rows[bad].len()
            )));
        }
        let features = rows.iter().flatten().copied().collect();
        Self::new(features, n_cols, targets.to_vec())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.features[row * self.n_cols + col]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// New dataset made of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.n_cols);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_rows {
                return Err(Error::invalid(format!(
                    "row index {i} out of range (n_rows = {})",
                    self.n_rows
                )));
            }
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset::new(features, self.n_cols, targets)
    }
}

/// A dataset whose response is a vector per row (row-major
/// `n_rows x n_outputs` targets).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiDataset {
    features: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    targets: Vec<f64>,
    n_outputs: usize,
}

impl MultiDataset {
    pub fn new(
        features: Vec<f64>,
        n_cols: usize,
        targets: Vec<f64>,
        n_outputs: usize,
    ) -> Result<Self> {
        if n_outputs == 0 {
            return Err(Error::invalid("n_outputs must be >= 1"));
        }
        if !targets.len().is_multiple_of(n_outputs) {
            return Err(Error::invalid(format!(
                "target length {} is not a multiple of n_outputs {n_outputs}",
                targets.len()
            )));
        }
        let n_rows = targets.len() / n_outputs;
        if features.len() != n_rows * n_cols {
            return Err(Error::invalid(format!(
                "feature matrix has {} entries, expected {} rows x {} cols",
                features.len(),
                n_rows,
                n_cols
            )));
        }
        if features.iter().chain(targets.iter()).any(|v| v.is_nan()) {
            return Err(Error::invalid("dataset contains NaN"));
        }
        Ok(Self {
            features,
            n_rows,
            n_cols,
            targets,
            n_outputs,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        &self.targets[i * self.n_outputs..(i + 1) * self.n_outputs]
    }

    /// Scalar dataset for one output dimension (features are copied).
    pub fn output_dataset(&self, output: usize) -> Result<Dataset> {
        if output >= self.n_outputs {
            return Err(Error::invalid(format!(
                "output index {output} out of range (n_outputs = {})",
                self.n_outputs
            )));
        }
        let targets = (0..self.n_rows)
            .map(|i| self.targets[i * self.n_outputs + output])
            .collect();
        Dataset::new(self.features.clone(), self.n_cols, targets)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<MultiDataset> {
        let mut features = Vec::with_capacity(indices.len() * self.n_cols);
        let mut targets = Vec::with_capacity(indices.len() * self.n_outputs);
        for &i in indices {
            if i >= self.n_rows {
                return Err(Error::invalid(format!(
                    "row index {i} out of range (n_rows = {})",
                    self.n_rows
                )));
            }
            features.extend_from_slice(self.row(i));
            targets.extend_from_slice(self.target_row(i));
        }
        MultiDataset::new(features, self.n_cols, targets, self.n_outputs)
    }
}

// ---------------------------------------------------------------- tests --

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_shape_checks() {
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2, vec![0.0]).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], 2, vec![0.0]).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 2, vec![f64::NAN]).is_err());
        let d = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2, vec![10.0, 20.0]).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.row(1), &[3.0, 4.0]);
        assert_eq!(d.value(1, 0), 3.0);
    }

    #[test]
    fn dataset_from_rows_checks_ragged_input() {
        let err = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0]], &[0.0, 1.0]);
        assert!(err.is_err());
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0]], &[5.0, 6.0]).unwrap();
        assert_eq!(d.targets(), &[5.0, 6.0]);
    }

    #[test]
    fn dataset_subset_preserves_order() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], &[0.0, 10.0, 20.0]).unwrap();
        let s = d.subset(&[2, 0]).unwrap();
        assert_eq!(s.targets(), &[20.0, 0.0]);
        assert!(d.subset(&[3]).is_err());
    }

    #[test]
    fn multi_dataset_accessors() {
        let m = MultiDataset::new(vec![1.0, 2.0], 1, vec![10.0, 11.0, 20.0, 21.0], 2).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.target_row(1), &[20.0, 21.0]);
        let d0 = m.output_dataset(0).unwrap();
        assert_eq!(d0.targets(), &[10.0, 20.0]);
        assert!(m.output_dataset(2).is_err());
    }

    #[test]
    fn stable_mean_is_order_invariant() {
        let a = [0.1, 0.7, 1e-17, -0.3, 0.9];
        let mut b = a;
        b.reverse();
        assert_eq!(stable_mean(&a).to_bits(), stable_mean(&b).to_bits());
    }
}
