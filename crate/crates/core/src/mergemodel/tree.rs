//! CART classification tree with Gini splits, grown to purity.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// `vote_fraction` is the share of class-1 samples that reached the leaf.
    Leaf { class: u8, vote_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    n_features: usize,
    /// Root at index 0; children always have larger indices than parents.
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
}

/// `n · gini` for class counts.
fn weighted_gini(n0: usize, n1: usize) -> f64 {
    let n = (n0 + n1) as f64;
    if n == 0.0 {
        0.0
    } else {
        n - ((n0 * n0 + n1 * n1) as f64) / n
    }
}

fn best_split(rows: &[Vec<f64>], labels: &[u8], sample: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n = sample.len();
    let total1 = sample.iter().filter(|&&i| labels[i] == 1).count();
    let mut best: Option<(f64, SplitChoice)> = None;
    let mut sorted = sample.to_vec();
    for feature in 0..rows[sample[0]].len() {
        sorted.sort_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]));
        let mut left1 = 0;
        for pos in 0..n - 1 {
            left1 += labels[sorted[pos]] as usize;
            let (here, next) = (rows[sorted[pos]][feature], rows[sorted[pos + 1]][feature]);
            let left_n = pos + 1;
            if here == next || left_n < min_leaf || n - left_n < min_leaf {
                continue;
            }
            let impurity = weighted_gini(left_n - left1, left1) + weighted_gini(n - left_n - (total1 - left1), total1 - left1);
            // Zero-gain splits are allowed so distinct points always end in pure leaves.
            if best.as_ref().is_none_or(|(b, _)| impurity < *b) {
                let mut threshold = here + (next - here) / 2.0;
                if threshold >= next {
                    threshold = here;
                }
                best = Some((impurity, SplitChoice { feature, threshold }));
            }
        }
    }
    best.map(|(_, s)| s)
}

impl DecisionTree {
    /// Grow on the rows listed in `sample` (duplicates allowed). Labels are 0/1.
    pub fn fit(rows: &[Vec<f64>], labels: &[u8], sample: &[usize], min_leaf: usize) -> Self {
        assert!(!sample.is_empty(), "tree needs at least one sample");
        let n_features = rows[sample[0]].len();
        let min_leaf = min_leaf.max(1);
        let mut nodes = vec![Node::Leaf { class: 0, vote_fraction: 0.0 }];
        let mut stack = vec![(0usize, sample.to_vec())];
        while let Some((id, members)) = stack.pop() {
            let ones = members.iter().filter(|&&i| labels[i] == 1).count();
            let fraction = ones as f64 / members.len() as f64;
            let leaf = Node::Leaf { class: u8::from(fraction >= 0.5), vote_fraction: fraction };
            if ones == 0 || ones == members.len() || members.len() < 2 * min_leaf {
                nodes[id] = leaf;
                continue;
            }
            match best_split(rows, labels, &members, min_leaf) {
                None => nodes[id] = leaf,
                Some(SplitChoice { feature, threshold }) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        members.iter().partition(|&&i| rows[i][feature] <= threshold);
                    let (left, right) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf { class: 0, vote_fraction: 0.0 });
                    nodes.push(Node::Leaf { class: 0, vote_fraction: 0.0 });
                    nodes[id] = Node::Split { feature, threshold, left, right };
                    stack.push((right, r));
                    stack.push((left, l));
                }
            }
        }
        Self { n_features, nodes }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn leaf_for(&self, row: &[f64]) -> (u8, f64) {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Split { feature, threshold, left, right } => {
                    id = if row[feature] <= threshold { left } else { right };
                }
                Node::Leaf { class, vote_fraction } => return (class, vote_fraction),
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        self.leaf_for(row).0
    }

    pub fn predict_fraction(&self, row: &[f64]) -> f64 {
        self.leaf_for(row).1
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (id, node) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = node {
                depth[*left] = depth[id] + 1;
                depth[*right] = depth[id] + 1;
                max = max.max(depth[id] + 1);
            }
        }
        max
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Structural checks for trees read from untrusted input.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut reached = vec![false; self.nodes.len()];
        reached[0] = true;
        for (id, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Split { feature, threshold, left, right } => {
                    if feature >= self.n_features || !threshold.is_finite() {
                        return Err(format!("node {id}: bad split"));
                    }
                    for child in [left, right] {
                        if child <= id || child >= self.nodes.len() || reached[child] {
                            return Err(format!("node {id}: bad child {child}"));
                        }
                        reached[child] = true;
                    }
                }
                Node::Leaf { class, vote_fraction } => {
                    if class > 1 || !(0.0..=1.0).contains(&vote_fraction) {
                        return Err(format!("node {id}: bad leaf"));
                    }
                }
            }
        }
        if reached.iter().all(|&r| r) {
            Ok(())
        } else {
            Err("unreachable node".into())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_threshold() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
        let labels: Vec<u8> = (0..10).map(|i| u8::from(i >= 6)).collect();
        let t = DecisionTree::fit(&rows, &labels, &(0..10).collect::<Vec<_>>(), 1);
        assert_eq!(t.nodes()[0], Node::Split { feature: 0, threshold: 5.5, left: 1, right: 2 });
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict(&[5.4, 9.0]), 0);
        assert_eq!(t.predict(&[5.6, 9.0]), 1);
        t.validate().unwrap();
    }

    #[test]
    fn tie_goes_to_lowest_feature() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, i as f64 * 10.0]).collect();
        let labels = [0, 0, 0, 1, 1, 1];
        let t = DecisionTree::fit(&rows, &labels, &[0, 1, 2, 3, 4, 5], 1);
        assert!(matches!(t.nodes()[0], Node::Split { feature: 0, threshold, .. } if threshold == 2.5));
    }

    #[test]
    fn memorizes_distinct_points() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![((i * 7919) % 40) as f64, ((i * 31) % 11) as f64]).collect();
        let labels: Vec<u8> = (0..40).map(|i| ((i * 13 + 5) % 3 == 0) as u8).collect();
        let t = DecisionTree::fit(&rows, &labels, &(0..40).collect::<Vec<_>>(), 1);
        for (r, l) in rows.iter().zip(&labels) {
            assert_eq!(t.predict(r), *l);
        }
        t.validate().unwrap();
    }

    #[test]
    fn inseparable_duplicates_become_mixed_leaf() {
        let rows = vec![vec![1.0], vec![1.0], vec![1.0]];
        let t = DecisionTree::fit(&rows, &[1, 0, 1], &[0, 1, 2], 1);
        assert_eq!(t.n_leaves(), 1);
        assert!((t.predict_fraction(&[1.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(t.predict(&[1.0]), 1);
    }

    #[test]
    fn min_leaf_respected() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let t = DecisionTree::fit(&rows, &labels, &(0..10).collect::<Vec<_>>(), 3);
        let mut counts = vec![0; t.nodes().len()];
        for r in &rows {
            let mut id = 0;
            while let Node::Split { feature, threshold, left, right } = t.nodes()[id] {
                id = if r[feature] <= threshold { left } else { right };
            }
            counts[id] += 1;
        }
        for (id, n) in t.nodes().iter().enumerate() {
            if matches!(n, Node::Leaf { .. }) {
                assert!(counts[id] >= 3);
            }
        }
    }
}
