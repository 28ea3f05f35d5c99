//! From-scratch random forest used as branch classifiers.
//!
//! Trees split on Gini impurity with per-node feature subsampling; each
//! tree trains on a bootstrap resample of the branch's feature matrix.
//! Prediction aggregates the trees' votes, and the per-category vote
//! fraction is the confidence the early-exit machinery consumes.

mod io;
mod tree;

pub use io::{forest_from_bytes, forest_to_bytes};
pub use tree::{best_split, gini, DecisionTree, FeatureMatrix, Node};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::seed::mix_seed;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training data must contain at least two classes")]
    SingleClass,
    #[error("feature dimension mismatch: forest expects {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("class counts must be nonempty with a positive total")]
    EmptyCounts,
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("forest blob has bad magic bytes")]
    BadMagic,
    #[error("forest blob version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("forest blob truncated: {0}")]
    Truncated(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Forest training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per node; `None` selects ceil(sqrt(d)).
    pub features_per_node: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 400, max_depth: 20, min_leaf: 1, features_per_node: None, seed: 0 }
    }
}

/// Shape of the tap feature map a branch reduces, used for cost
/// estimation. Zero dimensions mean the features arrive precomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureRecipe {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl FeatureRecipe {
    pub fn none() -> Self {
        Self { channels: 0, height: 0, width: 0 }
    }

    /// FLOPs to reduce a tap of this shape to a 2C mean vector:
    /// 2*C*H*W accumulation adds plus 2*C divisions.
    pub fn reduction_flops(&self) -> f64 {
        (2 * self.channels * self.height * self.width + 2 * self.channels) as f64
    }
}

/// A trained random forest attached to one tap point.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestBranch {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
    pub n_features: usize,
    pub config: ForestConfig,
    /// Which backbone tap this branch reads (0-based).
    pub tap_index: usize,
    pub feature_recipe: FeatureRecipe,
    /// Out-of-bag accuracy measured at fit time, when computable.
    pub oob_accuracy: Option<f64>,
}

impl ForestBranch {
    /// Per-class tree votes; sums to `n_trees` exactly.
    pub fn predict_votes(&self, x: &[f64]) -> Result<Vec<u32>, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::DimMismatch { expected: self.n_features, got: x.len() });
        }
        let mut votes = vec![0u32; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        Ok(votes)
    }

    /// Vote-fraction confidence vector P^1..P^N.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        let votes = self.predict_votes(x)?;
        let n = self.trees.len() as f64;
        Ok(votes.iter().map(|&v| v as f64 / n).collect())
    }

    /// Predicted label: argmax of votes, ties to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, ForestError> {
        let votes = self.predict_votes(x)?;
        Ok(argmax_u32(&votes))
    }

    /// Estimated FLOPs per inference: one FLOP per node comparison at the
    /// forest's mean root-to-leaf path length, plus the tap reduction.
    pub fn flops(&self) -> f64 {
        let comparisons: f64 = self.trees.iter().map(|t| t.mean_path_comparisons()).sum();
        comparisons + self.feature_recipe.reduction_flops()
    }
}

pub(crate) fn argmax_u32(v: &[u32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax_f64(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fits a random forest: each tree trains on a same-size bootstrap
/// resample with per-node feature subsampling. Reproducible from
/// `config.seed`; trees fit in parallel with per-tree derived seeds.
pub fn fit_forest(
    features: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    config: &ForestConfig,
    tap_index: usize,
    feature_recipe: FeatureRecipe,
) -> Result<ForestBranch, ForestError> {
    if features.rows != labels.len() {
        return Err(ForestError::BadParam(format!(
            "{} feature rows but {} labels",
            features.rows,
            labels.len()
        )));
    }
    if config.n_trees == 0 {
        return Err(ForestError::BadParam("n_trees must be >= 1".into()));
    }
    if config.min_leaf == 0 {
        return Err(ForestError::BadParam("min_leaf must be >= 1".into()));
    }
    let mut present = vec![false; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(ForestError::BadParam(format!("label {l} out of range")));
        }
        present[l] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(ForestError::SingleClass);
    }

    let n = features.rows;
    let fitted: Vec<(DecisionTree, Vec<bool>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, t as u64));
            let mut in_bag = vec![false; n];
            let mut idx = Vec::with_capacity(n);
            for _ in 0..n {
                let j = rand::Rng::random_range(&mut rng, 0..n);
                in_bag[j] = true;
                idx.push(j);
            }
            let tree = DecisionTree::fit(features, labels, &idx, n_classes, config, &mut rng);
            (tree, in_bag)
        })
        .collect();

    // Out-of-bag accuracy: vote with trees that never saw the sample.
    let mut hits = 0usize;
    let mut covered = 0usize;
    for i in 0..n {
        let mut votes = vec![0u32; n_classes];
        let mut any = false;
        for (tree, in_bag) in &fitted {
            if !in_bag[i] {
                votes[tree.predict(features.row(i))] += 1;
                any = true;
            }
        }
        if any {
            covered += 1;
            if argmax_u32(&votes) == labels[i] {
                hits += 1;
            }
        }
    }
    let oob_accuracy = (covered > 0).then(|| hits as f64 / covered as f64);

    Ok(ForestBranch {
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        n_classes,
        n_features: features.cols,
        config: *config,
        tap_index,
        feature_recipe,
        oob_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n_per: usize, seed: u64) -> (FeatureMatrix, Vec<usize>) {
        // Two well-separated blobs in 4 dimensions.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2usize {
            let center = if c == 0 { -2.0 } else { 2.0 };
            for _ in 0..n_per {
                for _ in 0..4 {
                    data.push(center + rng.random_range(-1.0..1.0));
                }
                labels.push(c);
            }
        }
        (FeatureMatrix::new(data, 4), labels)
    }

    #[test]
    fn separable_blobs_reach_high_oob_accuracy() {
        let (x, y) = blobs(60, 3);
        let cfg =
            ForestConfig { n_trees: 50, max_depth: 8, min_leaf: 1, seed: 1, ..Default::default() };
        let f = fit_forest(&x, &y, 2, &cfg, 0, FeatureRecipe::none()).unwrap();
        assert!(f.oob_accuracy.unwrap() >= 0.95, "oob {:?}", f.oob_accuracy);
        // Held-out evaluation agrees.
        let (xt, yt) = blobs(40, 99);
        let hits = (0..xt.rows).filter(|&i| f.predict(xt.row(i)).unwrap() == yt[i]).count();
        assert!(hits as f64 / yt.len() as f64 >= 0.95);
    }

    #[test]
    fn single_stump_fits_simple_line() {
        let x = FeatureMatrix::new(vec![0.0, 1.0, 10.0, 11.0], 1);
        let y = vec![0, 0, 1, 1];
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: 1,
            min_leaf: 1,
            features_per_node: Some(1),
            seed: 5,
        };
        let f = fit_forest(&x, &y, 2, &cfg, 0, FeatureRecipe::none()).unwrap();
        for i in 0..4 {
            assert_eq!(f.predict(x.row(i)).unwrap(), y[i]);
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = blobs(30, 7);
        let cfg = ForestConfig { n_trees: 20, max_depth: 6, seed: 11, ..Default::default() };
        let a = fit_forest(&x, &y, 2, &cfg, 0, FeatureRecipe::none()).unwrap();
        let b = fit_forest(&x, &y, 2, &cfg, 0, FeatureRecipe::none()).unwrap();
        assert_eq!(a, b);
        let (probe, _) = blobs(10, 23);
        for i in 0..probe.rows {
            assert_eq!(
                a.predict_votes(probe.row(i)).unwrap(),
                b.predict_votes(probe.row(i)).unwrap()
            );
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = FeatureMatrix::new(vec![1.0, 2.0, 3.0], 1);
        let y = vec![0, 0, 0];
        let cfg = ForestConfig::default();
        assert!(matches!(
            fit_forest(&x, &y, 2, &cfg, 0, FeatureRecipe::none()),
            Err(ForestError::SingleClass)
        ));
    }

    #[test]
    fn votes_sum_to_tree_count_and_dim_checked() {
        let (x, y) = blobs(30, 2);
        let cfg = ForestConfig { n_trees: 33, max_depth: 6, seed: 4, ..Default::default() };
        let f = fit_forest(&x, &y, 2, &cfg, 0, FeatureRecipe::none()).unwrap();
        let votes = f.predict_votes(x.row(0)).unwrap();
        assert_eq!(votes.iter().sum::<u32>(), 33);
        let p = f.predict_proba(x.row(0)).unwrap();
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(matches!(
            f.predict_proba(&[0.0; 3]),
            Err(ForestError::DimMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn depth_and_leaf_bounds_hold() {
        let (x, y) = blobs(80, 13);
        let cfg =
            ForestConfig { n_trees: 15, max_depth: 3, min_leaf: 5, seed: 9, ..Default::default() };
        let f = fit_forest(&x, &y, 2, &cfg, 0, FeatureRecipe::none()).unwrap();
        for t in &f.trees {
            assert!(t.depth() <= 3);
            for node in &t.nodes {
                if let Node::Leaf { class_counts } = node {
                    assert!(class_counts.iter().sum::<u32>() >= 5);
                }
            }
        }
    }

    #[test]
    fn forest_not_worse_than_worst_tree_on_training_data() {
        let (x, y) = blobs(50, 31);
        let cfg = ForestConfig { n_trees: 25, max_depth: 4, seed: 17, ..Default::default() };
        let f = fit_forest(&x, &y, 2, &cfg, 0, FeatureRecipe::none()).unwrap();
        let acc = |pred: &dyn Fn(&[f64]) -> usize| {
            (0..x.rows).filter(|&i| pred(x.row(i)) == y[i]).count() as f64 / y.len() as f64
        };
        let forest_acc = acc(&|r| f.predict(r).unwrap());
        let worst_tree =
            f.trees.iter().map(|t| acc(&|r| t.predict(r))).fold(f64::INFINITY, f64::min);
        assert!(forest_acc >= worst_tree, "forest {forest_acc} vs worst {worst_tree}");
    }

    #[test]
    fn fig4_style_hand_voting() {
        // Three stumps voting A, A, C on the same probe.
        let vote_for = |class: usize| {
            let mut counts = vec![0u32; 3];
            counts[class] = 1;
            DecisionTree { nodes: vec![Node::Leaf { class_counts: counts }], n_classes: 3 }
        };
        let f = ForestBranch {
            trees: vec![vote_for(0), vote_for(0), vote_for(2)],
            n_classes: 3,
            n_features: 1,
            config: ForestConfig { n_trees: 3, ..Default::default() },
            tap_index: 0,
            feature_recipe: FeatureRecipe::none(),
            oob_accuracy: None,
        };
        let p = f.predict_proba(&[0.0]).unwrap();
        assert_eq!(p, vec![2.0 / 3.0, 0.0, 1.0 / 3.0]);
        assert_eq!(f.predict(&[0.0]).unwrap(), 0);
        // A single tree yields a one-hot confidence.
        let single = ForestBranch { trees: vec![vote_for(1)], ..f.clone() };
        assert_eq!(single.predict_proba(&[0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn flops_formula() {
        // One stump, features supplied directly: exactly one comparison.
        let stump = DecisionTree {
            nodes: vec![
                Node::Internal { feature: 0, threshold: 0.5, left: 1, right: 2 },
                Node::Leaf { class_counts: vec![2, 0] },
                Node::Leaf { class_counts: vec![0, 2] },
            ],
            n_classes: 2,
        };
        let f = ForestBranch {
            trees: vec![stump],
            n_classes: 2,
            n_features: 1,
            config: ForestConfig { n_trees: 1, ..Default::default() },
            tap_index: 0,
            feature_recipe: FeatureRecipe::none(),
            oob_accuracy: None,
        };
        assert_eq!(f.flops(), 1.0);

        // Formula recomputation on a trained forest with a tap recipe.
        let (x, y) = blobs(40, 77);
        let cfg = ForestConfig { n_trees: 12, max_depth: 6, seed: 3, ..Default::default() };
        let recipe = FeatureRecipe { channels: 16, height: 8, width: 8 };
        let trained = fit_forest(&x, &y, 2, &cfg, 1, recipe).unwrap();
        let expect: f64 = trained.trees.iter().map(|t| t.mean_path_comparisons()).sum::<f64>()
            + (2 * 16 * 8 * 8 + 2 * 16) as f64;
        assert_eq!(trained.flops(), expect);

        // Smaller maps at deeper taps cost less to reduce.
        let shallow = FeatureRecipe { channels: 16, height: 16, width: 16 };
        let deep = FeatureRecipe { channels: 64, height: 4, width: 4 };
        assert!(deep.reduction_flops() < shallow.reduction_flops());
    }
}
