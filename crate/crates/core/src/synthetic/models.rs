use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::interventions::Predictor;
use crate::math;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl Predictor for LinearModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + math::dot(&self.weights, x)
    }
}

/// Closed-form ridge on centered data; the intercept is not penalized.
pub fn fit_ridge(x: &Matrix, y: &[f64], lambda: f64) -> Result<LinearModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid("ridge lambda must be finite and nonnegative"));
    }
    let (n, d) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::DimensionMismatch { context: "ridge targets", expected: n, found: y.len() });
    }
    if n == 0 {
        return Err(invalid("ridge needs at least one row"));
    }
    let xm = x.column_means();
    let ym = math::mean(y);
    let xc = DMatrix::from_fn(n, d, |r, c| x.get(r, c) - xm[c]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
    let mut gram = xc.transpose() * &xc;
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let rhs = xc.transpose() * yc;
    let w = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| invalid(alloc::format!("ridge solve failed: {e}")))?,
    };
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = ym - math::dot(&weights, &xm);
    Ok(LinearModel { weights, intercept, lambda })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf(v) => return v,
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

/// Gradient-boosted regression trees on squared loss.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TreeEnsemble {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl Predictor for TreeEnsemble {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TreeParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub max_bins: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 3, learning_rate: 0.1, min_leaf: 5, max_bins: 32 }
    }
}

/// Candidate thresholds per feature: distinct interior quantiles.
fn candidate_thresholds(x: &Matrix, max_bins: usize) -> Vec<Vec<f64>> {
    (0..x.cols())
        .map(|c| {
            let s = math::sorted(&x.column(c));
            let mut t: Vec<f64> = (1..max_bins).map(|b| math::quantile_sorted(&s, b as f64 / max_bins as f64)).collect();
            t.dedup();
            t.retain(|v| *v < s[s.len() - 1]);
            t
        })
        .collect()
}

struct Grower<'a> {
    bins: &'a [Vec<u16>],
    thresholds: &'a [Vec<f64>],
    params: TreeParams,
}

impl Grower<'_> {
    fn grow(&self, rows: Vec<usize>, residual: &[f64], depth: usize, nodes: &mut Vec<TreeNode>) -> usize {
        let at = nodes.len();
        let sum: f64 = rows.iter().map(|&r| residual[r]).sum();
        let count = rows.len() as f64;
        nodes.push(TreeNode::Leaf(if rows.is_empty() { 0.0 } else { sum / count }));
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf {
            return at;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, thresholds) in self.thresholds.iter().enumerate() {
            let nb = thresholds.len() + 1;
            let mut hs = vec![0.0; nb];
            let mut hc = vec![0usize; nb];
            for &r in &rows {
                let b = self.bins[f][r] as usize;
                hs[b] += residual[r];
                hc[b] += 1;
            }
            let (mut ls, mut lc) = (0.0, 0usize);
            for b in 0..nb - 1 {
                ls += hs[b];
                lc += hc[b];
                let rc = rows.len() - lc;
                if lc < self.params.min_leaf || rc < self.params.min_leaf {
                    continue;
                }
                let rs = sum - ls;
                let gain = ls * ls / lc as f64 + rs * rs / rc as f64 - sum * sum / count;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, b));
                }
            }
        }
        let Some((_, feature, bin)) = best else { return at };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| (self.bins[feature][r] as usize) <= bin);
        let left = self.grow(left_rows, residual, depth + 1, nodes);
        let right = self.grow(right_rows, residual, depth + 1, nodes);
        nodes[at] = TreeNode::Split { feature, threshold: self.thresholds[feature][bin], left, right };
        at
    }
}

/// Boosted axis-aligned trees grown greedily on histogram splits.
pub fn fit_tree_ensemble(x: &Matrix, y: &[f64], params: TreeParams) -> Result<TreeEnsemble> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::DimensionMismatch { context: "tree targets", expected: n, found: y.len() });
    }
    if n == 0 || params.max_bins < 2 || params.max_bins > u16::MAX as usize || params.min_leaf == 0 {
        return Err(invalid("invalid tree ensemble parameters"));
    }
    if !(params.learning_rate > 0.0) {
        return Err(invalid("learning rate must be positive"));
    }
    let thresholds = candidate_thresholds(x, params.max_bins);
    let bins: Vec<Vec<u16>> = thresholds
        .iter()
        .enumerate()
        .map(|(f, t)| (0..n).map(|r| t.partition_point(|v| *v < x.get(r, f)) as u16).collect())
        .collect();
    let base = math::mean(y);
    let mut pred = vec![base; n];
    let grower = Grower { bins: &bins, thresholds: &thresholds, params };
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let residual: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let mut nodes = Vec::new();
        grower.grow((0..n).collect(), &residual, 0, &mut nodes);
        let tree = Tree { nodes };
        for (r, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict_row(x.row(r));
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble { base, learning_rate: params.learning_rate, trees })
}
