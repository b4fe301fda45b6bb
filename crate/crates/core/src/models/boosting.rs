//! Gradient-boosted regression trees for squared-error loss.
//!
//! The model is
//!
//! ```text
//! f(x) = base + learning_rate * sum_m tree_m(x)
//! ```
//!
//! where `base` is the training-target mean and each tree is fit to the
//! current residuals. For squared error the residual fit is an exact
//! projection step, so the training MSE is non-increasing in the number of
//! trees whenever `learning_rate` lies in `[0, 2]`; the fitter tracks the
//! MSE after every stage and exposes it via [`BoostedTreesModel::train_mse`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use super::{load_model, save_model, stable_mean, Dataset, MultiDataset};
use crate::error::{Error, Result};
use crate::scores::{check_feature_len, Predictor, VectorPredictor};

const FORMAT_BOOSTED: &str = "ocs-arc/boosted-trees";
const FORMAT_MULTI: &str = "ocs-arc/multi-output-boosted-trees";

/// Hyperparameters for [`fit_boosted_trees`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostedTreesParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for BoostedTreesParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 5,
        }
    }
}

impl BoostedTreesParams {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate <= 2.0) {
            return Err(Error::invalid(format!(
                "learning_rate must lie in [0, 2], got {}",
                self.learning_rate
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be >= 1"));
        }
        Ok(())
    }
}

/// A fitted boosted-trees regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTreesModel {
    n_features: usize,
    base: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
    train_mse: Vec<f64>,
}

impl BoostedTreesModel {
    /// Training MSE trajectory: entry 0 is the MSE of the constant `base`
    /// predictor, entry m the MSE after the first m trees.
    pub fn train_mse(&self) -> &[f64] {
        &self.train_mse
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(path, FORMAT_BOOSTED, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_model(path, FORMAT_BOOSTED)
    }
}

impl Predictor for BoostedTreesModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        check_feature_len(self.n_features, x.len())?;
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        Ok(self.base + self.learning_rate * sum)
    }
}

/// Fits a boosted-trees regressor to `data`.
pub fn fit_boosted_trees(data: &Dataset, params: &BoostedTreesParams) -> Result<BoostedTreesModel> {
    params.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::EmptyDataset(
            "cannot fit boosted trees on an empty dataset".into(),
        ));
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };

    let base = stable_mean(data.targets());
    let mut residuals: Vec<f64> = data.targets().iter().map(|&y| y - base).collect();
    let mut train_mse = vec![mean_square(&residuals)];
    let mut trees = Vec::with_capacity(params.n_trees);

    for _ in 0..params.n_trees {
        let tree = RegressionTree::fit(data, &residuals, &tree_params);
        for (i, r) in residuals.iter_mut().enumerate() {
            *r -= params.learning_rate * tree.predict_row(data.row(i));
        }
        let mse = mean_square(&residuals);
        // exact residual fitting cannot raise the loss for lr in [0, 2]
        debug_assert!(mse <= train_mse.last().unwrap() * (1.0 + 1e-9) + 1e-12);
        train_mse.push(mse);
        trees.push(tree);
    }

    Ok(BoostedTreesModel {
        n_features: data.n_cols(),
        base,
        learning_rate: params.learning_rate,
        trees,
        train_mse,
    })
}

fn mean_square(values: &[f64]) -> f64 {
    let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
    stable_mean(&squares)
}

/// One independent boosted-trees regressor per output dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiOutputBoostedTrees {
    models: Vec<BoostedTreesModel>,
}

impl MultiOutputBoostedTrees {
    pub fn outputs(&self) -> &[BoostedTreesModel] {
        &self.models
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(path, FORMAT_MULTI, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_model(path, FORMAT_MULTI)
    }
}

impl VectorPredictor for MultiOutputBoostedTrees {
    fn n_features(&self) -> usize {
        self.models[0].n_features
    }

    fn n_outputs(&self) -> usize {
        self.models.len()
    }

    fn predict_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_feature_len(self.n_features(), x.len())?;
        self.models.iter().map(|m| m.predict(x)).collect()
    }
}

/// Fits one boosted-trees regressor per response dimension.
pub fn fit_multi_output_boosted_trees(
    data: &MultiDataset,
    params: &BoostedTreesParams,
) -> Result<MultiOutputBoostedTrees> {
    if data.n_rows() == 0 {
        return Err(Error::EmptyDataset(
            "cannot fit boosted trees on an empty dataset".into(),
        ));
    }
    let models = (0..data.n_outputs())
        .map(|o| fit_boosted_trees(&data.output_dataset(o)?, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiOutputBoostedTrees { models })
}

// ---------------------------------------------------------------- tests --
