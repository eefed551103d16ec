//! Random-forest baseline over raw (un-normalized, un-transformed) features:
//! bootstrap-resampled trees grown by greedy class-weighted Gini splits over
//! a per-tree random feature subset, scored by averaging leaf probabilities.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Sample;
use crate::layout::{canonical_json, deserialize_doc};
use crate::seeding::derive_rng;

/// Format version of serialized forest files.
pub const FOREST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfConfig {
    pub num_trees: usize,
    /// Size of each tree's random raw-feature subset.
    pub max_features_per_tree: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Class weights: w0 scales negatives, w1 positives.
    pub w0: f64,
    pub w1: f64,
    pub bootstrap: bool,
    /// When set, every split draws a fresh candidate-feature subset instead
    /// of the tree keeping one fixed subset.
    pub per_split_features: bool,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            num_trees: 100,
            max_features_per_tree: 20,
            max_depth: None,
            min_samples_leaf: 1,
            w0: 1.0,
            w1: 10.0,
            bootstrap: true,
            per_split_features: false,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        prob: f64,
    },
}

/// One grown tree. Nodes are stored in postorder, so every child index is
/// strictly smaller than its parent's and `root` is the last node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
    /// The tree's assigned feature subset, ascending.
    pub features: Vec<usize>,
}

impl DecisionTree {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.nodes.is_empty() || self.root != self.nodes.len() - 1 {
            return Err(Error::validation("tree", "missing or misplaced root"));
        }
        if self.features.windows(2).any(|w| w[0] >= w[1])
            || self.features.iter().any(|&f| f >= dim)
            || self.features.is_empty()
        {
            return Err(Error::validation("tree", "invalid feature subset"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= dim || !threshold.is_finite() {
                        return Err(Error::validation("tree", "invalid split"));
                    }
                    if *left >= i || *right >= i {
                        return Err(Error::validation("tree", "child after parent"));
                    }
                }
                TreeNode::Leaf { prob } => {
                    if !(0.0..=1.0).contains(prob) {
                        return Err(Error::validation("tree", "leaf probability out of range"));
                    }
                }
            }
        }
        Ok(())
    }

    fn leaf_prob(&self, x: &[f64]) -> f64 {
        let mut node = &self.nodes[self.root];
        loop {
            match node {
                TreeNode::Leaf { prob } => return *prob,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold {
                        &self.nodes[*left]
                    } else {
                        &self.nodes[*right]
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestMeta {
    pub config: RfConfig,
    pub feature_dim: usize,
    pub train_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub meta: ForestMeta,
}

struct Grower<'a> {
    rows: &'a [&'a [f64]],
    labels: &'a [bool],
    cfg: &'a RfConfig,
    dim: usize,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    /// Weighted Gini impurity of a (npos, nneg) node.
    fn gini(&self, npos: usize, nneg: usize) -> f64 {
        let wp = self.cfg.w1 * npos as f64;
        let wn = self.cfg.w0 * nneg as f64;
        let total = wp + wn;
        1.0 - (wp / total).powi(2) - (wn / total).powi(2)
    }

    /// Best (feature, threshold, weighted child impurity) over the candidate
    /// features, or None when no valid split improves on the parent.
    /// Candidates are scanned in ascending feature order and ascending
    /// threshold order, and a new best must be strictly better, so ties
    /// resolve toward the lowest feature index, then the lowest threshold.
    fn best_split(&self, idx: &[usize], candidates: &[usize]) -> Option<(usize, f64, f64)> {
        let npos = idx.iter().filter(|&&i| self.labels[i]).count();
        let nneg = idx.len() - npos;
        let parent = self.gini(npos, nneg);
        let total_w = self.cfg.w1 * npos as f64 + self.cfg.w0 * nneg as f64;
        let msl = self.cfg.min_samples_leaf;

        let mut best: Option<(usize, f64, f64)> = None;
        let mut vals: Vec<(f64, bool)> = Vec::with_capacity(idx.len());
        for &feature in candidates {
            vals.clear();
            vals.extend(idx.iter().map(|&i| (self.rows[i][feature], self.labels[i])));
            vals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));

            let mut left_pos = 0usize;
            let mut left_n = 0usize;
            for k in 0..vals.len() - 1 {
                left_n += 1;
                if vals[k].1 {
                    left_pos += 1;
                }
                if vals[k].0 == vals[k + 1].0 {
                    continue;
                }
                let right_n = vals.len() - left_n;
                if left_n < msl || right_n < msl {
                    continue;
                }
                let threshold = (vals[k].0 + vals[k + 1].0) / 2.0;
                let right_pos = npos - left_pos;
                let wl = self.cfg.w1 * left_pos as f64 + self.cfg.w0 * (left_n - left_pos) as f64;
                let wr = self.cfg.w1 * right_pos as f64
                    + self.cfg.w0 * (right_n - right_pos) as f64;
                let score = (wl * self.gini(left_pos, left_n - left_pos)
                    + wr * self.gini(right_pos, right_n - right_pos))
                    / total_w;
                if score < parent && best.is_none_or(|(_, _, s)| score < s) {
                    best = Some((feature, threshold, score));
                }
            }
        }
        best
    }

    fn grow(
        &mut self,
        idx: Vec<usize>,
        depth: usize,
        subset: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let npos = idx.iter().filter(|&&i| self.labels[i]).count();
        let nneg = idx.len() - npos;
        let make_leaf = |nodes: &mut Vec<TreeNode>| {
            let wp = self.cfg.w1 * npos as f64;
            let wn = self.cfg.w0 * nneg as f64;
            nodes.push(TreeNode::Leaf {
                prob: wp / (wp + wn),
            });
            nodes.len() - 1
        };

        if npos == 0 || nneg == 0 || self.cfg.max_depth.is_some_and(|d| depth >= d) {
            return make_leaf(&mut self.nodes);
        }
        let per_split_draw;
        let candidates: &[usize] = if self.cfg.per_split_features {
            per_split_draw = draw_subset(self.dim, self.cfg.max_features_per_tree, rng);
            &per_split_draw
        } else {
            subset
        };
        let Some((feature, threshold, _)) = self.best_split(&idx, candidates) else {
            return make_leaf(&mut self.nodes);
        };

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.rows[i][feature] <= threshold);
        let left = self.grow(left_idx, depth + 1, subset, rng);
        let right = self.grow(right_idx, depth + 1, subset, rng);
        self.nodes.push(TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        });
        self.nodes.len() - 1
    }
}

/// `k` distinct feature indices drawn uniformly, ascending.
fn draw_subset(dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = k.min(dim);
    let mut subset = rand::seq::index::sample(rng, dim, k).into_vec();
    subset.sort_unstable();
    subset
}

/// Train a forest on raw sample features. Deterministic in `cfg.seed`.
pub fn rf_train(train_samples: &[Sample], cfg: &RfConfig) -> Result<RandomForest> {
    if train_samples.is_empty() {
        return Err(Error::validation("training set", "empty"));
    }
    if cfg.num_trees == 0 || cfg.max_features_per_tree == 0 {
        return Err(Error::Config(
            "num_trees and max_features_per_tree must be positive".into(),
        ));
    }
    if !(cfg.w0.is_finite() && cfg.w0 > 0.0 && cfg.w1.is_finite() && cfg.w1 > 0.0) {
        return Err(Error::Config("class weights must be positive".into()));
    }
    let dim = train_samples[0].features.len();
    if dim == 0 {
        return Err(Error::validation("training set", "zero-width features"));
    }
    for s in train_samples {
        if s.features.len() != dim {
            return Err(Error::Dimension(format!(
                "sample ({}, {}, {}) has {} features, expected {dim}",
                s.design_id,
                s.col,
                s.row,
                s.features.len()
            )));
        }
        if s.features.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("training set", "non-finite feature"));
        }
    }

    let rows: Vec<&[f64]> = train_samples.iter().map(|s| s.features.values.as_slice()).collect();
    let labels: Vec<bool> = train_samples.iter().map(|s| s.label).collect();
    let n = rows.len();

    let trees = (0..cfg.num_trees)
        .map(|i| {
            let mut rng = derive_rng(cfg.seed, "rf/tree", i as u64);
            let subset = draw_subset(dim, cfg.max_features_per_tree, &mut rng);
            let idx: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut grower = Grower {
                rows: &rows,
                labels: &labels,
                cfg,
                dim,
                nodes: Vec::new(),
            };
            let root = grower.grow(idx, 0, &subset, &mut rng);
            let features = if cfg.per_split_features {
                (0..dim).collect()
            } else {
                subset
            };
            DecisionTree {
                nodes: grower.nodes,
                root,
                features,
            }
        })
        .collect();

    Ok(RandomForest {
        trees,
        meta: ForestMeta {
            config: cfg.clone(),
            feature_dim: dim,
            train_samples: n,
        },
    })
}

/// Mean leaf probability over all trees, per sample; scores lie in [0, 1].
pub fn rf_predict(forest: &RandomForest, samples: &[Sample]) -> Result<Vec<f64>> {
    let dim = forest.meta.feature_dim;
    samples
        .iter()
        .map(|s| {
            if s.features.len() != dim {
                return Err(Error::Dimension(format!(
                    "sample has {} features, forest expects {dim}",
                    s.features.len()
                )));
            }
            let sum: f64 = forest
                .trees
                .iter()
                .map(|t| t.leaf_prob(&s.features.values))
                .sum();
            Ok(sum / forest.trees.len() as f64)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ForestDoc {
    version: u32,
    trees: Vec<DecisionTree>,
    meta: ForestMeta,
}

/// Serialize a forest to canonical JSON bytes.
pub fn save_forest(forest: &RandomForest) -> Vec<u8> {
    canonical_json(&ForestDoc {
        version: FOREST_VERSION,
        trees: forest.trees.clone(),
        meta: forest.meta.clone(),
    })
}

/// Parse and fully validate a serialized forest.
pub fn load_forest(bytes: &[u8]) -> Result<RandomForest> {
    let doc: ForestDoc = deserialize_doc(bytes)?;
    if doc.version != FOREST_VERSION {
        return Err(Error::Config(format!(
            "unsupported forest version {} (expected {FOREST_VERSION})",
            doc.version
        )));
    }
    if doc.trees.is_empty() {
        return Err(Error::validation("forest", "no trees"));
    }
    for tree in &doc.trees {
        tree.validate(doc.meta.feature_dim)?;
    }
    Ok(RandomForest {
        trees: doc.trees,
        meta: doc.meta,
    })
}
