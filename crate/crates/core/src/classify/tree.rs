use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 20,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        probs: Vec<f64>,
        samples: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        match self {
            TreeNode::Leaf { .. } => vec![self],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }
}

/// CART classification tree with Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_classes: usize,
    pub n_features: usize,
    pub params: TreeParams,
    pub root: TreeNode,
}

/// Best split found at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Sample-weighted Gini impurity of the two children.
    pub impurity: f64,
}

const TIE_EPS: f64 = 1e-12;

pub fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

/// Exhaustive scan over every feature and every boundary between sorted
/// distinct values. Ties go to the lower feature index, then the lower
/// threshold.
pub fn best_split(
    x: ArrayView2<f64>,
    y: &[usize],
    rows: &[usize],
    n_classes: usize,
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = rows.len();
    let mut total = vec![0usize; n_classes];
    for &r in rows {
        total[y[r]] += 1;
    }
    let mut best: Option<SplitChoice> = None;
    let mut order = rows.to_vec();
    for f in 0..x.ncols() {
        let col = x.column(f);
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        let mut left = vec![0usize; n_classes];
        for i in 0..n.saturating_sub(1) {
            left[y[order[i]]] += 1;
            let (lo, hi) = (col[order[i]], col[order[i + 1]]);
            if lo == hi {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let imp = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
            if best.is_none_or(|b| imp < b.impurity - TIE_EPS) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    impurity: imp,
                });
            }
        }
    }
    best
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

impl DecisionTree {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, params: TreeParams) -> Result<Self> {
        super::check_training(x, y, n_classes)?;
        if params.min_leaf == 0 {
            return Err(Error::invalid("min_leaf must be at least 1"));
        }
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let root = Self::grow(x, y, &rows, n_classes, params, 0);
        Ok(DecisionTree {
            n_classes,
            n_features: x.ncols(),
            params,
            root,
        })
    }

    fn grow(
        x: ArrayView2<f64>,
        y: &[usize],
        rows: &[usize],
        n_classes: usize,
        params: TreeParams,
        depth: usize,
    ) -> TreeNode {
        let mut counts = vec![0usize; n_classes];
        for &r in rows {
            counts[y[r]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let leaf = || TreeNode::Leaf {
            probs: counts.iter().map(|&c| c as f64 / rows.len() as f64).collect(),
            samples: rows.len(),
        };
        if pure || depth >= params.max_depth || rows.len() < 2 * params.min_leaf {
            return leaf();
        }
        let Some(split) = best_split(x, y, rows, n_classes, params.min_leaf) else {
            return leaf();
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| x[[i, split.feature]] <= split.threshold);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(Self::grow(x, y, &l, n_classes, params, depth + 1)),
            right: Box::new(Self::grow(x, y, &r, n_classes, params, depth + 1)),
        }
    }

    fn leaf_for(&self, row: ArrayView1<f64>) -> &[f64] {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { probs, .. } => return probs,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (i, row) in x.rows().into_iter().enumerate() {
            for (c, &p) in self.leaf_for(row).iter().enumerate() {
                out[[i, c]] = p;
            }
        }
        Ok(out)
    }
}
