//! CART classification tree grown on a bootstrap sample with Gini splits.

use rand::seq::index::sample;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Class counts of the bootstrap samples reaching the leaf.
    Leaf { counts: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

pub(crate) struct GrowParams {
    pub classes: usize,
    pub min_leaf: usize,
    pub max_features: usize,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl DecisionTree {
    /// `rows` are indices into `x` (with repeats for bootstrap duplicates),
    /// `y` holds 0-based classes.
    pub(crate) fn grow(x: &[Vec<f64>], y: &[usize], rows: Vec<usize>, params: &GrowParams, rng: &mut Rng) -> Self {
        let mut tree = DecisionTree { nodes: Vec::new() };
        tree.grow_node(x, y, rows, params, rng);
        tree
    }

    fn grow_node(&mut self, x: &[Vec<f64>], y: &[usize], rows: Vec<usize>, p: &GrowParams, rng: &mut Rng) -> usize {
        let mut counts = vec![0.0; p.classes];
        for &r in &rows {
            counts[y[r]] += 1.0;
        }
        let id = self.nodes.len();
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        if pure || rows.len() < 2 * p.min_leaf {
            self.nodes.push(Node::Leaf { counts });
            return id;
        }
        let Some(split) = best_split(x, y, &rows, &counts, p, rng) else {
            self.nodes.push(Node::Leaf { counts });
            return id;
        };
        // reserve the slot, children are appended after it
        self.nodes.push(Node::Leaf { counts: Vec::new() });
        let (lrows, rrows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| x[r][split.feature] <= split.threshold);
        let left = self.grow_node(x, y, lrows, p, rng);
        let right = self.grow_node(x, y, rrows, p, rng);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }

    pub fn leaf_counts(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

fn best_split(x: &[Vec<f64>], y: &[usize], rows: &[usize], counts: &[f64], p: &GrowParams, rng: &mut Rng) -> Option<Split> {
    let n_features = x[0].len();
    let m = p.max_features.clamp(1, n_features);
    let total = rows.len() as f64;
    let parent = gini(counts, total);
    let mut best: Option<Split> = None;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    for feature in sample(rng, n_features, m).into_iter() {
        order.clear();
        order.extend(rows.iter().map(|&r| (x[r][feature], y[r])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = vec![0.0; p.classes];
        for i in 0..order.len() - 1 {
            left[order[i].1] += 1.0;
            let (v, next) = (order[i].0, order[i + 1].0);
            if v == next {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = total - nl;
            if (i + 1) < p.min_leaf || order.len() - (i + 1) < p.min_leaf {
                continue;
            }
            let right: Vec<f64> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
            let child = (nl * gini(&left, nl) + nr * gini(&right, nr)) / total;
            let decrease = parent - child;
            if decrease > 1e-12 && best.as_ref().is_none_or(|b| decrease > b.decrease) {
                let mid = 0.5 * (v + next);
                // adjacent floats: the midpoint can round up onto `next`
                let threshold = if mid < next { mid } else { v };
                best = Some(Split { feature, threshold, decrease });
            }
        }
    }
    best
}
