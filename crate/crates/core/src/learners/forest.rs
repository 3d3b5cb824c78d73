//! Bagged trees with per-split feature subsampling.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, TreeModel, TreeParams};
use super::Task;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub seed: u64,
    pub bootstrap: bool,
    /// Features tried per split; `None` picks √p (classification) or p/3 (regression).
    pub max_features: Option<usize>,
    pub max_depth: usize,
    pub min_bucket: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 250,
            seed: 0,
            bootstrap: true,
            max_features: None,
            max_depth: 30,
            min_bucket: 5,
        }
    }
}

impl ForestParams {
    pub fn default_for(task: Task) -> Self {
        ForestParams {
            n_trees: match task {
                Task::Classification => 500,
                Task::Regression => 250,
            },
            ..ForestParams::default()
        }
    }
}

pub fn default_max_features(task: Task, p: usize) -> usize {
    let m = match task {
        Task::Classification => (p as f64).sqrt().floor() as usize,
        Task::Regression => p / 3,
    };
    m.clamp(1, p.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub task: Task,
    pub params: ForestParams,
    pub max_features: usize,
    pub trees: Vec<TreeModel>,
}

impl ForestModel {
    /// Mean of the member trees (a probability for classification).
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(&r.to_vec())).collect()
    }
}

/// Per-tree seed derived from the master seed, independent of scheduling.
fn tree_seed(master: u64, index: usize) -> u64 {
    master ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn fit_forest(x: &Array2<f64>, y: &[f64], task: Task, params: ForestParams) -> Result<ForestModel> {
    if params.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be >= 1".into()));
    }
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows vs {} targets",
            x.nrows(),
            y.len()
        )));
    }
    let n = x.nrows();
    let p = x.ncols();
    let max_features = params
        .max_features
        .unwrap_or_else(|| default_max_features(task, p))
        .clamp(1, p.max(1));
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_bucket: params.min_bucket,
        cp: 0.0,
        max_features: Some(max_features),
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(params.seed, i));
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(x, y, rows, task, tree_params, Some(&mut rng))
        })
        .collect();
    Ok(ForestModel {
        task,
        params,
        max_features,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tree::fit_tree;

    fn data() -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((120, 4), |_| rng.random::<f64>());
        let y = x.rows().into_iter().map(|r| r[0] * 3.0 + r[2] - r[3] * r[1]).collect();
        (x, y)
    }

    #[test]
    fn degenerate_forest_equals_single_tree() {
        let (x, y) = data();
        let forest = fit_forest(
            &x,
            &y,
            Task::Regression,
            ForestParams {
                n_trees: 1,
                bootstrap: false,
                max_features: Some(4),
                ..ForestParams::default()
            },
        )
        .unwrap();
        let tree = fit_tree(
            &x,
            &y,
            Task::Regression,
            TreeParams {
                max_depth: 30,
                min_bucket: 5,
                cp: 0.0,
                max_features: None,
            },
        )
        .unwrap();
        assert_eq!(forest.predict(&x), tree.predict(&x));
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = data();
        let params = ForestParams {
            n_trees: 20,
            seed: 11,
            ..ForestParams::default()
        };
        let a = fit_forest(&x, &y, Task::Regression, params).unwrap();
        let b = fit_forest(&x, &y, Task::Regression, params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prediction_is_mean_of_trees() {
        let (x, y) = data();
        let f = fit_forest(
            &x,
            &y,
            Task::Regression,
            ForestParams {
                n_trees: 7,
                ..Default::default()
            },
        )
        .unwrap();
        let row = x.row(5).to_vec();
        let mean = f.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>() / 7.0;
        assert_eq!(f.predict_row(&row), mean);
    }

    #[test]
    fn default_tree_counts_per_task() {
        assert_eq!(ForestParams::default_for(Task::Classification).n_trees, 500);
        assert_eq!(ForestParams::default_for(Task::Regression).n_trees, 250);
        assert_eq!(default_max_features(Task::Classification, 39), 6);
        assert_eq!(default_max_features(Task::Regression, 24), 8);
    }
}
