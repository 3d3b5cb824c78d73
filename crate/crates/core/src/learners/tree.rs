//! Greedy binary decision trees (CART-style).

use ndarray::Array2;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum rows per leaf.
    pub min_bucket: usize,
    /// A split must remove at least `cp` times the root impurity.
    pub cp: f64,
    /// Features drawn per split; `None` uses all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 30,
            min_bucket: 7,
            cp: 0.01,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Total impurity removed by this split.
        decrease: f64,
        n: usize,
    },
}

/// Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub task: Task,
    pub params: TreeParams,
    pub n_features: usize,
    pub nodes: Vec<Node>,
}

impl TreeModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => id = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(&r.to_vec())).collect()
    }

    /// `(feature, threshold)` of the root, if the tree split at all.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Impurity of a node times its size: Gini for classification, sum of
/// squared errors for regression (from `sum` and `sum_sq`).
fn gini_total(n: f64, s: f64) -> f64 {
    2.0 * s * (n - s) / n
}

/// Impurity decrease of splitting `(n, s)` into `(nl, sl)` and the rest.
fn decrease(task: Task, n: f64, s: f64, nl: f64, sl: f64) -> f64 {
    let (nr, sr) = (n - nl, s - sl);
    match task {
        Task::Classification => gini_total(n, s) - gini_total(nl, sl) - gini_total(nr, sr),
        Task::Regression => sl * sl / nl + sr * sr / nr - s * s / n,
    }
}

fn node_impurity(task: Task, y: &[f64], rows: &[usize]) -> f64 {
    let n = rows.len() as f64;
    let s: f64 = rows.iter().map(|&r| y[r]).sum();
    match task {
        Task::Classification => gini_total(n, s),
        Task::Regression => {
            let mean = s / n;
            rows.iter().map(|&r| (y[r] - mean).powi(2)).sum()
        }
    }
}

struct Grower<'a> {
    x: &'a Array2<f64>,
    y: &'a [f64],
    task: Task,
    params: TreeParams,
    min_gain: f64,
    nodes: Vec<Node>,
    rng: Option<&'a mut ChaCha8Rng>,
    buf: Vec<(f64, f64)>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl Grower<'_> {
    fn candidates(&mut self) -> Vec<usize> {
        let p = self.x.ncols();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < p => {
                let mut f = sample(rng, p, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<Candidate> {
        let n = rows.len();
        let nf = n as f64;
        let s: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let min_bucket = self.params.min_bucket.max(1);
        let mut best: Option<Candidate> = None;
        for f in self.candidates() {
            self.buf.clear();
            self.buf.extend(rows.iter().map(|&r| (self.x[[r, f]], self.y[r])));
            self.buf.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut sl = 0.0;
            for i in 0..n - 1 {
                sl += self.buf[i].1;
                let (a, b) = (self.buf[i].0, self.buf[i + 1].0);
                let nl = i + 1;
                if a == b || nl < min_bucket || n - nl < min_bucket {
                    continue;
                }
                let d = decrease(self.task, nf, s, nl as f64, sl);
                if best.as_ref().is_none_or(|c| d > c.decrease) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        decrease: d,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let n = rows.len();
        let s: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: s / n as f64, n });
        if depth >= self.params.max_depth
            || n < 2 * self.params.min_bucket.max(1)
            || node_impurity(self.task, self.y, &rows) <= 0.0
        {
            return id;
        }
        let Some(best) = self.best_split(&rows) else {
            return id;
        };
        if !(best.decrease > 0.0 && best.decrease >= self.min_gain) {
            return id;
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.x[[r, best.feature]] <= best.threshold);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            decrease: best.decrease,
            n,
        };
        id
    }
}

fn validate(x: &Array2<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows vs {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("targets must be finite".into()));
    }
    Ok(())
}

pub fn fit_tree(x: &Array2<f64>, y: &[f64], task: Task, params: TreeParams) -> Result<TreeModel> {
    validate(x, y)?;
    Ok(grow_tree(x, y, (0..x.nrows()).collect(), task, params, None))
}

/// Grows a tree on `rows` (duplicates allowed, as in a bootstrap sample).
pub(crate) fn grow_tree(
    x: &Array2<f64>,
    y: &[f64],
    rows: Vec<usize>,
    task: Task,
    params: TreeParams,
    rng: Option<&mut ChaCha8Rng>,
) -> TreeModel {
    let root = node_impurity(task, y, &rows);
    let mut g = Grower {
        x,
        y,
        task,
        params,
        // Guards against splits whose gain is only rounding noise.
        min_gain: (params.cp * root).max(1e-12 * root),
        nodes: Vec::new(),
        rng,
        buf: Vec::with_capacity(rows.len()),
    };
    g.grow(rows, 0);
    TreeModel {
        task,
        params,
        n_features: x.ncols(),
        nodes: g.nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_target_gives_single_leaf() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let t = fit_tree(&x, &[2.5; 4], Task::Regression, TreeParams::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[10.0]), 2.5);
    }

    #[test]
    fn separable_stump() {
        let x = array![[1.0], [2.0], [8.0], [9.0]];
        let params = TreeParams {
            max_depth: 1,
            min_bucket: 1,
            cp: 0.0,
            max_features: None,
        };
        let t = fit_tree(&x, &[0.0, 0.0, 1.0, 1.0], Task::Classification, params).unwrap();
        let (f, thr) = t.root_split().unwrap();
        assert_eq!(f, 0);
        assert!(thr > 2.0 && thr < 8.0);
        assert_eq!(t.predict(&x), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn training_points_predict_their_leaf_mean() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 1.0], [3.0, 0.0], [4.0, 1.0], [5.0, 0.0]];
        let y = [1.0, 1.5, 4.0, 4.5, 9.0, 9.5];
        let params = TreeParams {
            max_depth: 2,
            min_bucket: 2,
            cp: 0.0,
            max_features: None,
        };
        let t = fit_tree(&x, &y, Task::Regression, params).unwrap();
        assert!(t.depth() <= 2);
        let p = t.predict(&x);
        assert_eq!(p, vec![1.25, 1.25, 4.25, 4.25, 9.25, 9.25]);
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        // Both columns separate the labels identically.
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let params = TreeParams {
            max_depth: 1,
            min_bucket: 1,
            cp: 0.0,
            max_features: None,
        };
        let t = fit_tree(&x, &[0.0, 0.0, 1.0, 1.0], Task::Classification, params).unwrap();
        assert_eq!(t.root_split(), Some((0, 1.5)));
    }

    #[test]
    fn complexity_penalty_blocks_weak_splits() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [1.0, 1.1, 1.0, 1.1];
        let params = TreeParams {
            cp: 0.9,
            min_bucket: 1,
            ..TreeParams::default()
        };
        let t = fit_tree(&x, &y, Task::Regression, params).unwrap();
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn empty_input_errors() {
        let x = Array2::<f64>::zeros((0, 2));
        assert!(fit_tree(&x, &[], Task::Regression, TreeParams::default()).is_err());
    }
}
