//! Impurity-based feature importance for tree models.

use super::tree::{Node, TreeModel};
use super::Model;
use crate::error::{Error, Result};

fn accumulate(tree: &TreeModel, totals: &mut [f64]) {
    for node in &tree.nodes {
        if let Node::Split { feature, decrease, .. } = node {
            totals[*feature] += decrease;
        }
    }
}

/// Total impurity decrease per feature over every split, normalized to sum
/// to one and ranked (ties by feature index). A model without splits yields
/// an empty list.
pub fn feature_importance(model: &Model) -> Result<Vec<(usize, f64)>> {
    let trees: Vec<&TreeModel> = match model {
        Model::Tree(t) => vec![t],
        Model::Forest(f) => f.trees.iter().collect(),
        Model::Boosted(b) => b.trees.iter().collect(),
        Model::Linear(_) | Model::Logistic(_) => {
            return Err(Error::InvalidConfig(
                "feature importance needs a tree-based model".into(),
            ))
        }
    };
    let p = trees.first().map_or(0, |t| t.n_features);
    let mut totals = vec![0.0; p];
    for t in trees {
        accumulate(t, &mut totals);
    }
    let sum: f64 = totals.iter().sum();
    if sum <= 0.0 {
        return Ok(Vec::new());
    }
    let mut ranked: Vec<(usize, f64)> = totals.into_iter().map(|v| v / sum).enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}
