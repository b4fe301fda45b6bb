//! Least-squares regression trees.
//!
//! A split on feature `f` at threshold `c` sends rows with `x[f] <= c`
//! left. The best split maximizes the variance-reduction score
//!
//! ```text
//! (sum_L)^2 / n_L + (sum_R)^2 / n_R
//! ```
//!
//! which differs from the negative total squared error only by a constant.
//! Candidate thresholds are midpoints between consecutive distinct feature
//! values. Ties in the score break to the lowest feature index, then the
//! lowest threshold, so fits are deterministic; all sums are accumulated
//! in a sorted order, so fits are also invariant to the row order of the
//! training data.

use serde::{Deserialize, Serialize};

use super::{stable_mean, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

/// A fitted regression tree, stored as a node arena rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl RegressionTree {
    /// Fits a tree to `targets` (one per dataset row). The caller
    /// guarantees `targets.len() == data.n_rows() > 0`.
    pub(crate) fn fit(data: &Dataset, targets: &[f64], params: &TreeParams) -> Self {
        debug_assert_eq!(targets.len(), data.n_rows());
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        let mut nodes = Vec::new();
        build(data, targets, rows, 0, params, &mut nodes);
        RegressionTree { nodes }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

fn build(
    data: &Dataset,
    targets: &[f64],
    rows: Vec<usize>,
    depth: usize,
    params: &TreeParams,
    nodes: &mut Vec<Node>,
) -> usize {
    let leaf = |nodes: &mut Vec<Node>, rows: &[usize]| {
        let values: Vec<f64> = rows.iter().map(|&i| targets[i]).collect();
        nodes.push(Node::Leaf {
            value: stable_mean(&values),
        });
        nodes.len() - 1
    };

    if depth >= params.max_depth || rows.len() < 2 * params.min_samples_leaf {
        return leaf(nodes, &rows);
    }
    let best = match find_best_split(data, targets, &rows, params.min_samples_leaf) {
        Some(b) => b,
        None => return leaf(nodes, &rows),
    };

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&i| data.value(i, best.feature) <= best.threshold);
    debug_assert!(left_rows.len() >= params.min_samples_leaf);
    debug_assert!(right_rows.len() >= params.min_samples_leaf);

    let idx = nodes.len();
    nodes.push(Node::Leaf { value: 0.0 }); // placeholder, replaced below
    let left = build(data, targets, left_rows, depth + 1, params, nodes);
    let right = build(data, targets, right_rows, depth + 1, params, nodes);
    nodes[idx] = Node::Split {
        feature: best.feature,
        threshold: best.threshold,
        left,
        right,
    };
    idx
}

fn find_best_split(
    data: &Dataset,
    targets: &[f64],
    rows: &[usize],
    min_samples_leaf: usize,
) -> Option<BestSplit> {
    let n = rows.len();
    let mut best: Option<BestSplit> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);

    for feature in 0..data.n_cols() {
        pairs.clear();
        pairs.extend(rows.iter().map(|&i| (data.value(i, feature), targets[i])));
        // Sorting by (value, target) makes every prefix sum below a pure
        // function of the multiset of rows, not of their order.
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

        let total: f64 = pairs.iter().map(|p| p.1).sum();
        // Splitting is only worthwhile if the score beats the parent's own
        // (sum)^2 / n by more than float noise.
        let parent_score = total * total / n as f64;
        let tol = 1e-12 * parent_score.abs().max(1.0);

        let mut left_sum = 0.0;
        for s in 1..n {
            left_sum += pairs[s - 1].1;
            if pairs[s - 1].0 == pairs[s].0 {
                continue; // not a boundary between distinct values
            }
            let n_left = s;
            let n_right = n - s;
            if n_left < min_samples_leaf || n_right < min_samples_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / n_left as f64
                + right_sum * right_sum / n_right as f64;
            if score <= parent_score + tol {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => score > b.score,
            };
            if better {
                best = Some(BestSplit {
                    score,
                    feature,
                    threshold: split_threshold(pairs[s - 1].0, pairs[s].0),
                });
            }
        }
    }
    best
}

/// Midpoint of two consecutive distinct values, clamped so that `<=`
/// routing keeps exactly the scanned prefix on the left even when the
/// midpoint rounds up to `b`.
fn split_threshold(a: f64, b: f64) -> f64 {
    debug_assert!(a < b);
    let mid = 0.5 * (a + b);
    if mid >= b {
        a
    } else {
        mid
    }
}

// ---------------------------------------------------------------- tests --
