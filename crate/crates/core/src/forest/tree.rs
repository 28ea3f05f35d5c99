//! Gini decision tree: split search and recursive fitting.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ForestConfig, ForestError};

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, cols: usize) -> Self {
        assert!(cols > 0 && data.len() % cols == 0, "ragged feature matrix");
        let rows = data.len() / cols;
        Self { data, rows, cols }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map(|r| r.len()).unwrap_or(1);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged feature matrix");
            data.extend_from_slice(r);
        }
        Self { data, rows: rows.len(), cols }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Tree node: either a threshold decision or a leaf with the class
/// histogram of the training samples that landed there.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { class_counts: Vec<u32> },
}

/// A fitted decision tree stored as a flat node array (root at 0).
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
}

/// Gini impurity of a class histogram: `1 - sum(p_k^2)`.
pub fn gini(class_counts: &[u32]) -> Result<f64, ForestError> {
    let total: u64 = class_counts.iter().map(|&c| c as u64).sum();
    if class_counts.is_empty() || total == 0 {
        return Err(ForestError::EmptyCounts);
    }
    let t = total as f64;
    let sq: f64 = class_counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum();
    Ok(1.0 - sq)
}

fn gini_of(counts: &[u32], total: f64) -> f64 {
    let mut sq = 0.0;
    for &c in counts {
        let p = c as f64 / total;
        sq += p * p;
    }
    1.0 - sq
}

/// Finds the split maximizing the weighted Gini decrease over the given
/// candidate features, with thresholds at midpoints between consecutive
/// distinct sorted values. Ties break to the lowest feature index, then
/// the lowest threshold (candidates are scanned in ascending order, so
/// the first maximum wins). Returns `None` when no split reduces
/// impurity or `min_leaf` blocks every cut.
pub fn best_split(
    features: &FeatureMatrix,
    labels: &[usize],
    indices: &[usize],
    candidate_features: &[usize],
    n_classes: usize,
    min_leaf: usize,
) -> Option<(usize, f64, f64)> {
    let n = indices.len();
    if n < 2 || candidate_features.is_empty() {
        return None;
    }
    let mut parent_counts = vec![0u32; n_classes];
    for &i in indices {
        parent_counts[labels[i]] += 1;
    }
    let parent_gini = gini_of(&parent_counts, n as f64);
    if parent_gini == 0.0 {
        return None;
    }

    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in candidate_features {
        sorted.clear();
        sorted.extend(indices.iter().map(|&i| (features.get(i, f), labels[i])));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut left_counts = vec![0u32; n_classes];
        let mut right_counts = parent_counts.clone();
        for k in 0..n - 1 {
            let (x, y) = sorted[k];
            left_counts[y] += 1;
            right_counts[y] -= 1;
            let next = sorted[k + 1].0;
            if next == x {
                continue;
            }
            let nl = k + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let mut threshold = 0.5 * (x + next);
            // Guard against the midpoint rounding up onto the right value.
            if threshold >= next {
                threshold = x;
            }
            let child = (nl as f64 * gini_of(&left_counts, nl as f64)
                + nr as f64 * gini_of(&right_counts, nr as f64))
                / n as f64;
            let gain = parent_gini - child;
            let better = match best {
                None => gain > 0.0,
                Some((bg, bf, bt)) => {
                    gain > bg || (gain == bg && (f, threshold) < (bf, bt))
                }
            };
            if better && gain > 0.0 {
                best = Some((gain, f, threshold));
            }
        }
    }
    best.map(|(gain, f, t)| (f, t, gain))
}

impl DecisionTree {
    /// Fits a tree on `indices` (a bootstrap multiset into `features`).
    /// Per-node candidate features are subsampled from `rng`.
    pub fn fit(
        features: &FeatureMatrix,
        labels: &[usize],
        indices: &[usize],
        n_classes: usize,
        config: &ForestConfig,
        rng: &mut ChaCha8Rng,
    ) -> DecisionTree {
        let k = config
            .features_per_node
            .unwrap_or_else(|| (features.cols as f64).sqrt().ceil() as usize)
            .clamp(1, features.cols);
        let mut tree = DecisionTree { nodes: Vec::new(), n_classes };
        let mut scratch: Vec<usize> = (0..features.cols).collect();
        let mut idx = indices.to_vec();
        tree.grow(features, labels, &mut idx, 0, config, k, &mut scratch, rng);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        features: &FeatureMatrix,
        labels: &[usize],
        indices: &mut [usize],
        depth: usize,
        config: &ForestConfig,
        k: usize,
        scratch: &mut [usize],
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let mut counts = vec![0u32; self.n_classes];
        for &i in indices.iter() {
            counts[labels[i]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let can_split =
            !pure && depth < config.max_depth && indices.len() >= 2 * config.min_leaf;
        if !can_split {
            return self.push_leaf(counts);
        }

        // Partial Fisher-Yates draw of k distinct candidate features.
        for j in 0..k.min(scratch.len()) {
            let swap = rng.random_range(j..scratch.len());
            scratch.swap(j, swap);
        }
        let mut candidates: Vec<usize> = scratch[..k].to_vec();
        candidates.sort_unstable();

        let split = best_split(
            features,
            labels,
            indices,
            &candidates,
            self.n_classes,
            config.min_leaf,
        );
        let (feature, threshold, _gain) = match split {
            Some(s) => s,
            None => return self.push_leaf(counts),
        };

        // Partition in place: [<= threshold | > threshold].
        let mut mid = 0;
        for i in 0..indices.len() {
            if features.get(indices[i], feature) <= threshold {
                indices.swap(i, mid);
                mid += 1;
            }
        }
        debug_assert!(mid >= config.min_leaf && indices.len() - mid >= config.min_leaf);

        let node = self.nodes.len();
        self.nodes.push(Node::Internal { feature, threshold, left: 0, right: 0 });
        let (l_idx, r_idx) = indices.split_at_mut(mid);
        let left = self.grow(features, labels, l_idx, depth + 1, config, k, scratch, rng);
        let right = self.grow(features, labels, r_idx, depth + 1, config, k, scratch, rng);
        if let Node::Internal { left: l, right: r, .. } = &mut self.nodes[node] {
            *l = left;
            *r = right;
        }
        node
    }

    fn push_leaf(&mut self, class_counts: Vec<u32>) -> usize {
        self.nodes.push(Node::Leaf { class_counts });
        self.nodes.len() - 1
    }

    /// Class histogram at the leaf the sample routes to.
    pub fn leaf_counts(&self, x: &[f64]) -> &[u32] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Internal { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { class_counts } => return class_counts,
            }
        }
    }

    /// Predicted label: majority class of the reached leaf, ties to the
    /// lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        super::argmax_u32(self.leaf_counts(x))
    }

    /// Maximum number of comparisons on any root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize, d: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => d,
                Node::Internal { left, right, .. } => {
                    walk(nodes, *left, d + 1).max(walk(nodes, *right, d + 1))
                }
            }
        }
        walk(&self.nodes, 0, 0)
    }

    /// Mean comparisons per inference: leaf depths weighted by the
    /// training samples that landed in each leaf.
    pub fn mean_path_comparisons(&self) -> f64 {
        fn walk(nodes: &[Node], at: usize, d: usize, acc: &mut (f64, f64)) {
            match &nodes[at] {
                Node::Leaf { class_counts } => {
                    let w = class_counts.iter().map(|&c| c as f64).sum::<f64>();
                    acc.0 += d as f64 * w;
                    acc.1 += w;
                }
                Node::Internal { left, right, .. } => {
                    walk(nodes, *left, d + 1, acc);
                    walk(nodes, *right, d + 1, acc);
                }
            }
        }
        let mut acc = (0.0, 0.0);
        walk(&self.nodes, 0, 0, &mut acc);
        if acc.1 == 0.0 {
            0.0
        } else {
            acc.0 / acc.1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[10, 0]).unwrap(), 0.0);
        assert_eq!(gini(&[5, 5]).unwrap(), 0.5);
        assert!((gini(&[3, 3, 3]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(gini(&[0, 0]), Err(ForestError::EmptyCounts)));
        assert!(matches!(gini(&[]), Err(ForestError::EmptyCounts)));
    }

    #[test]
    fn gini_bounded_by_uniform() {
        // 1 - 1/K upper bound.
        for k in 2..6u32 {
            let counts = vec![7u32; k as usize];
            let g = gini(&counts).unwrap();
            assert!(g <= 1.0 - 1.0 / k as f64 + 1e-12);
        }
    }

    #[test]
    fn best_split_one_dimensional_line() {
        let x = FeatureMatrix::new(vec![0.0, 1.0, 10.0, 11.0], 1);
        let y = vec![0, 0, 1, 1];
        let idx = [0, 1, 2, 3];
        let (f, t, gain) = best_split(&x, &y, &idx, &[0], 2, 1).unwrap();
        assert_eq!(f, 0);
        assert_eq!(t, 5.5);
        assert!((gain - 0.5).abs() < 1e-15);
    }

    #[test]
    fn best_split_none_when_pure() {
        let x = FeatureMatrix::new(vec![0.0, 1.0, 2.0], 1);
        let y = vec![1, 1, 1];
        assert!(best_split(&x, &y, &[0, 1, 2], &[0], 2, 1).is_none());
    }

    #[test]
    fn best_split_prefers_perfectly_separating_feature() {
        // Feature 1 separates perfectly, feature 0 is noise.
        let rows = vec![
            vec![0.3, 0.0],
            vec![0.9, 1.0],
            vec![0.1, 0.1],
            vec![0.8, 0.9],
            vec![0.5, 2.0],
            vec![0.2, 2.1],
        ];
        let x = FeatureMatrix::from_rows(&rows);
        let y = vec![0, 0, 0, 0, 1, 1];
        let idx = [0, 1, 2, 3, 4, 5];
        let (f, t, _) = best_split(&x, &y, &idx, &[0, 1], 2, 1).unwrap();
        assert_eq!(f, 1);
        assert!((t - 1.5).abs() < 1e-12, "threshold {t}");
    }

    #[test]
    fn min_leaf_blocks_all_splits() {
        let x = FeatureMatrix::new(vec![0.0, 1.0, 10.0], 1);
        let y = vec![0, 0, 1];
        assert!(best_split(&x, &y, &[0, 1, 2], &[0], 2, 2).is_none());
    }

    #[test]
    fn mean_comparisons_of_stump() {
        let stump = DecisionTree {
            nodes: vec![
                Node::Internal { feature: 0, threshold: 0.0, left: 1, right: 2 },
                Node::Leaf { class_counts: vec![3, 0] },
                Node::Leaf { class_counts: vec![0, 5] },
            ],
            n_classes: 2,
        };
        assert_eq!(stump.mean_path_comparisons(), 1.0);
        assert_eq!(stump.depth(), 1);
    }
}
