//! Supervised learners written from scratch, with cross-validated tuning.

pub mod boosting;
pub mod cv;
pub mod forest;
pub mod importance;
pub mod linalg;
pub mod linear;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;

pub use boosting::{fit_gbt, BoostParams, BoostedModel};
pub use cv::{cross_validate, kfold, CvResult};
pub use forest::{fit_forest, ForestModel, ForestParams};
pub use importance::feature_importance;
pub use linear::{fit_ridge, fit_ridge_logistic, LinearModel, LogisticModel};
pub use tree::{fit_tree, Node, TreeModel, TreeParams};

/// Model document version written to and required from JSON files.
pub const MODEL_FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

/// Learner families. Order is the row order of estimate matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Shallow greedy tree with cross-validated depth.
    InterpretableTree,
    Cart,
    RandomForest,
    /// Ridge regression, or L2 logistic regression for classification.
    Linear,
    BoostedTrees,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::InterpretableTree,
        Method::Cart,
        Method::RandomForest,
        Method::Linear,
        Method::BoostedTrees,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::InterpretableTree => "interpretable_tree",
            Method::Cart => "cart",
            Method::RandomForest => "random_forest",
            Method::Linear => "linear",
            Method::BoostedTrees => "boosted_trees",
        }
    }

    pub fn display_name(self, task: Task) -> &'static str {
        match (self, task) {
            (Method::InterpretableTree, _) => "Interpretable Tree",
            (Method::Cart, _) => "CART",
            (Method::RandomForest, _) => "Random Forest",
            (Method::Linear, Task::Regression) => "Linear Regression",
            (Method::Linear, Task::Classification) => "Logistic Regression",
            (Method::BoostedTrees, _) => "Boosted Trees",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.label() == norm)
            .ok_or_else(|| Error::field("method", format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
    Linear(LinearModel),
    Logistic(LogisticModel),
}

impl Model {
    /// Regression value, or positive-class probability.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Model::Tree(m) => m.predict_row(x),
            Model::Forest(m) => m.predict_row(x),
            Model::Boosted(m) => m.predict_row(x),
            Model::Linear(m) => m.predict_row(x),
            Model::Logistic(m) => m.predict_row(x),
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(&r.to_vec())).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format_version: &'a str,
            model: &'a Model,
        }
        Ok(serde_json::to_string(&Doc {
            format_version: MODEL_FORMAT_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Model> {
        #[derive(Deserialize)]
        struct Doc {
            format_version: String,
            model: serde_json::Value,
        }
        let doc: Doc = serde_json::from_str(s)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::IncompatibleVersion {
                found: doc.format_version,
                expected: MODEL_FORMAT_VERSION.into(),
            });
        }
        Ok(serde_json::from_value(doc.model)?)
    }
}

/// Hyper-parameter grids and fixed settings for every learner family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub folds: usize,
    pub interpretable_depth_grid: Vec<usize>,
    pub interpretable_min_bucket: usize,
    pub cart_cp_grid: Vec<f64>,
    pub cart_min_bucket: usize,
    pub cart_max_depth: usize,
    /// Overrides the per-task default tree count (500 classification, 250 regression).
    pub forest_trees: Option<usize>,
    pub forest_min_bucket_grid: Vec<usize>,
    pub boost: BoostParams,
    pub boost_depth_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            folds: 5,
            interpretable_depth_grid: vec![2, 3, 4, 5, 6],
            interpretable_min_bucket: 20,
            cart_cp_grid: vec![0.001, 0.003, 0.01, 0.03],
            cart_min_bucket: 7,
            cart_max_depth: 30,
            forest_trees: None,
            forest_min_bucket_grid: vec![5],
            boost: BoostParams::default(),
            boost_depth_grid: vec![3],
            lambda_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
        }
    }
}

/// One concrete setting of a learner family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LearnerSpec {
    Tree(TreeParams),
    Forest(ForestParams),
    Boosted(BoostParams),
    Ridge { lambda: f64 },
}

impl LearnerSpec {
    pub fn fit(&self, x: &Array2<f64>, y: &[f64], task: Task) -> Result<Model> {
        Ok(match *self {
            LearnerSpec::Tree(p) => Model::Tree(fit_tree(x, y, task, p)?),
            LearnerSpec::Forest(p) => Model::Forest(fit_forest(x, y, task, p)?),
            LearnerSpec::Boosted(p) => Model::Boosted(fit_gbt(x, y, task, p)?),
            LearnerSpec::Ridge { lambda } => match task {
                Task::Regression => Model::Linear(fit_ridge(x, y, lambda)?),
                Task::Classification => Model::Logistic(fit_ridge_logistic(x, y, lambda)?),
            },
        })
    }
}

impl LearnerConfig {
    pub fn grid(&self, method: Method, task: Task, seed: u64) -> Vec<LearnerSpec> {
        match method {
            Method::InterpretableTree => self
                .interpretable_depth_grid
                .iter()
                .map(|&d| {
                    LearnerSpec::Tree(TreeParams {
                        max_depth: d,
                        min_bucket: self.interpretable_min_bucket,
                        cp: 0.0,
                        max_features: None,
                    })
                })
                .collect(),
            Method::Cart => self
                .cart_cp_grid
                .iter()
                .map(|&cp| {
                    LearnerSpec::Tree(TreeParams {
                        max_depth: self.cart_max_depth,
                        min_bucket: self.cart_min_bucket,
                        cp,
                        max_features: None,
                    })
                })
                .collect(),
            Method::RandomForest => {
                let base = ForestParams::default_for(task);
                self.forest_min_bucket_grid
                    .iter()
                    .map(|&mb| {
                        LearnerSpec::Forest(ForestParams {
                            n_trees: self.forest_trees.unwrap_or(base.n_trees),
                            seed,
                            min_bucket: mb,
                            ..base
                        })
                    })
                    .collect()
            }
            Method::Linear => self
                .lambda_grid
                .iter()
                .map(|&lambda| LearnerSpec::Ridge { lambda })
                .collect(),
            Method::BoostedTrees => self
                .boost_depth_grid
                .iter()
                .map(|&d| {
                    LearnerSpec::Boosted(BoostParams {
                        max_depth: d,
                        ..self.boost
                    })
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be >= 2".into()));
        }
        for m in Method::ALL {
            if self.grid(m, Task::Regression, 0).is_empty() {
                return Err(Error::InvalidConfig(format!("empty hyper-parameter grid for {m}")));
            }
        }
        Ok(())
    }
}

/// Held-out score used for tuning: AUC for classification, R² for regression.
pub fn holdout_score(task: Task, predicted: &[f64], actual: &[f64]) -> Result<f64> {
    match task {
        Task::Classification => {
            let labels: Vec<bool> = actual.iter().map(|&v| v == 1.0).collect();
            metrics::auc(predicted, &labels)
        }
        Task::Regression => metrics::r2(predicted, actual),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model: Model,
    pub spec: LearnerSpec,
    /// Mean fold score of the chosen setting (`NaN` for a one-point grid).
    pub cv_score: f64,
}

/// Tunes `method` by k-fold cross-validation, then refits on all rows.
pub fn fit_method(
    method: Method,
    task: Task,
    x: &Array2<f64>,
    y: &[f64],
    config: &LearnerConfig,
    seed: u64,
) -> Result<FittedModel> {
    let grid = config.grid(method, task, seed);
    let cv = cross_validate(&grid, x, y, config.folds, seed, |spec, xf, yf, xh, yh| {
        let model = spec.fit(xf, yf, task)?;
        holdout_score(task, &model.predict(xh), yh)
    })?;
    let model = cv.best.fit(x, y, task)?;
    Ok(FittedModel {
        model,
        spec: cv.best,
        cv_score: cv.scores[cv.best_index],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_method_round_trips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((150, 4), |_| rng.random::<f64>() * 3.0);
        let y: Vec<f64> = x
            .rows()
            .into_iter()
            .map(|r| r[0].exp() / 3.0 - r[1] + 0.1 * r[3])
            .collect();
        let config = LearnerConfig {
            forest_trees: Some(10),
            ..LearnerConfig::default()
        };
        for m in Method::ALL {
            let fitted = fit_method(m, Task::Regression, &x, &y, &config, 1).unwrap();
            let back = Model::from_json(&fitted.model.to_json().unwrap()).unwrap();
            assert_eq!(back, fitted.model, "{m}");
            for (a, b) in fitted.model.predict(&x).iter().zip(back.predict(&x)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let m = Model::Linear(LinearModel {
            weights: vec![1.0],
            intercept: 0.5,
            lambda: 0.1,
        });
        let doc = m
            .to_json()
            .unwrap()
            .replace("\"format_version\":\"1\"", "\"format_version\":\"0\"");
        assert!(matches!(Model::from_json(&doc), Err(Error::IncompatibleVersion { .. })));
    }

    #[test]
    fn method_labels_parse() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert_eq!("Random-Forest".parse::<Method>().unwrap(), Method::RandomForest);
    }
}
