//! Gradient-boosted regression trees.
//!
//! Regression fits each stage to the current residuals. Classification fits
//! the log-loss negative gradient `y − σ(F)` and uses the leaf mean of the
//! gradients as the leaf value (no Newton line search).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::linear::sigmoid;
use super::tree::{grow_tree, TreeModel, TreeParams};
use super::Task;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_bucket: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_bucket: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub task: Task,
    pub params: BoostParams,
    /// Mean target, or its log-odds for classification.
    pub init: f64,
    pub trees: Vec<TreeModel>,
}

impl BoostedModel {
    /// Additive score `init + Σ rate·tree(x)`.
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.staged_score(x, self.trees.len())
    }

    pub fn staged_score(&self, x: &[f64], stages: usize) -> f64 {
        let mut f = self.init;
        for t in &self.trees[..stages] {
            f += self.params.learning_rate * t.predict_row(x);
        }
        f
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.task {
            Task::Regression => self.raw_score(x),
            Task::Classification => sigmoid(self.raw_score(x)),
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(&r.to_vec())).collect()
    }
}

pub fn fit_gbt(x: &Array2<f64>, y: &[f64], task: Task, params: BoostParams) -> Result<BoostedModel> {
    if params.n_stages == 0 {
        return Err(Error::InvalidConfig("n_stages must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&params.learning_rate) {
        return Err(Error::InvalidConfig("learning rate must lie in [0, 1]".into()));
    }
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows vs {} targets",
            x.nrows(),
            y.len()
        )));
    }
    let n = x.nrows();
    let mean = y.iter().sum::<f64>() / n as f64;
    let init = match task {
        Task::Regression => mean,
        Task::Classification => {
            let p = mean.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
    };
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_bucket: params.min_bucket,
        cp: 0.0,
        max_features: None,
    };
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut score = vec![init; n];
    let mut trees = Vec::with_capacity(params.n_stages);
    for _ in 0..params.n_stages {
        let gradient: Vec<f64> = match task {
            Task::Regression => y.iter().zip(&score).map(|(t, f)| t - f).collect(),
            Task::Classification => y.iter().zip(&score).map(|(t, f)| t - sigmoid(*f)).collect(),
        };
        let tree = grow_tree(x, &gradient, (0..n).collect(), Task::Regression, tree_params, None);
        for (f, r) in score.iter_mut().zip(&rows) {
            *f += params.learning_rate * tree.predict_row(r);
        }
        trees.push(tree);
    }
    Ok(BoostedModel {
        task,
        params,
        init,
        trees,
    })
}
