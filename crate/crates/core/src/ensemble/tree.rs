//! Binary classification trees grown on class-weighted Gini impurity.

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        proba: [f64; 2],
        samples: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn per node; `None` uses all of them.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_features: usize,
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Sum over both children of `weight * gini`.
    pub score: f64,
}

/// `1 - sum p_c^2` over the weighted class totals.
pub fn gini(weighted: [f64; 2]) -> f64 {
    let total = weighted[0] + weighted[1];
    if total <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (weighted[0] / total, weighted[1] / total);
    1.0 - p0 * p0 - p1 * p1
}

fn weighted_counts(counts: [usize; 2], w: [f64; 2]) -> [f64; 2] {
    [counts[0] as f64 * w[0], counts[1] as f64 * w[1]]
}

/// `weight * gini` of a node holding `counts` rows of each class.
fn node_score(counts: [usize; 2], w: [f64; 2]) -> f64 {
    let wc = weighted_counts(counts, w);
    (wc[0] + wc[1]) * gini(wc)
}

/// Midpoint between consecutive sorted values, never equal to the upper one.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Best split of `rows` over `features` by weighted Gini. Ties go to the
/// earlier feature in `features`, then to the lower threshold.
///
/// Class totals are integer counts times the class weight, so the result does
/// not depend on the order of `rows`.
pub fn best_split(
    x: &Array2<f64>,
    y: &[u8],
    class_weight: [f64; 2],
    rows: &[usize],
    features: &[usize],
    min_samples_leaf: usize,
) -> Option<SplitChoice> {
    let n = rows.len();
    let mut total = [0usize; 2];
    for &r in rows {
        total[y[r] as usize] += 1;
    }
    let mut best: Option<SplitChoice> = None;
    let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(n);
    for &f in features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x[[r, f]], y[r])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; 2];
        for i in 0..n.saturating_sub(1) {
            left[pairs[i].1 as usize] += 1;
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let nl = i + 1;
            if nl < min_samples_leaf || n - nl < min_samples_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = node_score(left, class_weight) + node_score(right, class_weight);
            if best.is_none_or(|b| score < b.score) {
                best = Some(SplitChoice { feature: f, threshold: midpoint(pairs[i].0, pairs[i + 1].0), score });
            }
        }
    }
    best
}

impl DecisionTree {
    /// Grows a tree on `rows` (duplicates allowed, as in a bootstrap sample).
    ///
    /// A node becomes a leaf when it is pure, at `max_depth`, or has no split
    /// leaving `min_samples_leaf` rows on both sides. Each node draws
    /// `max_features` features; if none of them splits, the remaining
    /// features are tried in the drawn order until one does.
    pub fn fit<R: Rng + ?Sized>(
        x: &Array2<f64>,
        y: &[u8],
        class_weight: [f64; 2],
        rows: &[usize],
        params: &TreeParams,
        rng: &mut R,
    ) -> Self {
        let mut tree = DecisionTree { n_features: x.ncols(), nodes: Vec::new() };
        let mut rows = rows.to_vec();
        tree.grow(x, y, class_weight, &mut rows, 0, params, rng);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow<R: Rng + ?Sized>(
        &mut self,
        x: &Array2<f64>,
        y: &[u8],
        w: [f64; 2],
        rows: &mut [usize],
        depth: usize,
        params: &TreeParams,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        let mut counts = [0usize; 2];
        for &r in rows.iter() {
            counts[y[r] as usize] += 1;
        }
        let wc = weighted_counts(counts, w);
        let total = wc[0] + wc[1];
        let proba = if total > 0.0 { [wc[0] / total, wc[1] / total] } else { [0.5, 0.5] };
        self.nodes.push(Node::Leaf { proba, samples: rows.len() });

        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_reached = params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || rows.len() < 2 * params.min_samples_leaf.max(1) {
            return id;
        }
        let Some(split) = self.choose_split(x, y, w, rows, params, rng) else {
            return id;
        };

        let mut mid = 0;
        for i in 0..rows.len() {
            if x[[rows[i], split.feature]] <= split.threshold {
                rows.swap(i, mid);
                mid += 1;
            }
        }
        let (l_rows, r_rows) = rows.split_at_mut(mid);
        let left = self.grow(x, y, w, l_rows, depth + 1, params, rng);
        let right = self.grow(x, y, w, r_rows, depth + 1, params, rng);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }

    fn choose_split<R: Rng + ?Sized>(
        &self,
        x: &Array2<f64>,
        y: &[u8],
        w: [f64; 2],
        rows: &[usize],
        params: &TreeParams,
        rng: &mut R,
    ) -> Option<SplitChoice> {
        let d = x.ncols();
        let m = params.max_features.unwrap_or(d).clamp(1, d);
        if m == d {
            let all: Vec<usize> = (0..d).collect();
            return best_split(x, y, w, rows, &all, params.min_samples_leaf);
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(rng);
        let mut drawn = order[..m].to_vec();
        drawn.sort_unstable();
        if let Some(s) = best_split(x, y, w, rows, &drawn, params.min_samples_leaf) {
            return Some(s);
        }
        order[m..].iter().find_map(|&f| best_split(x, y, w, rows, &[f], params.min_samples_leaf))
    }

    pub fn leaf_for(&self, row: ArrayView1<f64>) -> &Node {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> [f64; 2] {
        match self.leaf_for(row) {
            Node::Leaf { proba, .. } => *proba,
            Node::Split { .. } => unreachable!("leaf_for stops at a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}
