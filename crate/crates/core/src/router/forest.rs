//! Random forest of CART trees with Gini splits.
//!
//! Each tree is grown on a bootstrap resample of size n, samples a fresh
//! subset of features at every split, and stores the fraction of EASY
//! samples in each leaf. Tree `t` draws from ChaCha8 stream `t` of the
//! configured seed, so trees can be grown in parallel and still come out
//! identical.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{RouterFeatures, N_FEATURES};
use super::{Difficulty, RouterError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: usize,
    pub seed: u64,
    /// Feature indices never considered for splits (feature ablation).
    #[serde(default)]
    pub dropped_features: Vec<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            // ceil(sqrt(10))
            features_per_split: 4,
            seed: 42,
            dropped_features: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        easy_fraction: f64,
    },
}

/// Nodes stored flat with the root at index 0; children always follow their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf(easy_fraction: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { easy_fraction }],
        }
    }

    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { easy_fraction } => return easy_fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Structural checks for trees read from disk.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { easy_fraction } => {
                    if !(0.0..=1.0).contains(&easy_fraction) {
                        return Err(format!("node {i}: easy_fraction {easy_fraction} outside [0, 1]"));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= N_FEATURES {
                        return Err(format!("node {i}: feature index {feature} out of range"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i}: non-finite threshold"));
                    }
                    // Children strictly after the parent rules out cycles.
                    for child in [left, right] {
                        if child <= i || child >= self.nodes.len() {
                            return Err(format!("node {i}: bad child index {child}"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    /// Out-of-bag accuracy at the 0.5 vote; `None` when no sample was ever out of bag.
    pub oob_accuracy: Option<f64>,
}

struct Grower<'a> {
    x: &'a [[f64; N_FEATURES]],
    easy: &'a [bool],
    config: &'a ForestConfig,
    allowed: Vec<usize>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// n * gini for a binary node, i.e. 2 * easy * hard / n.
fn weighted_gini(n: usize, easy: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    2.0 * easy as f64 * (n - easy) as f64 / n as f64
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let n = idx.len();
        let n_easy = idx.iter().filter(|&&i| self.easy[i]).count();
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf {
            easy_fraction: n_easy as f64 / n as f64,
        });

        let pure = n_easy == 0 || n_easy == n;
        let depth_capped = self.config.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || n < 2 * self.config.min_leaf.max(1) || self.allowed.is_empty() {
            return slot;
        }

        let Some(best) = self.best_split(idx, n_easy, rng) else {
            return slot;
        };

        idx.sort_by(|&a, &b| self.x[a][best.feature].total_cmp(&self.x[b][best.feature]));
        let cut = idx.partition_point(|&i| self.x[i][best.feature] <= best.threshold);
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        slot
    }

    fn best_split(&self, idx: &[usize], n_easy: usize, rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.config.min_leaf.max(1);
        let k = self.config.features_per_split.clamp(1, self.allowed.len());
        let parent = weighted_gini(n, n_easy);

        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for pick in sample(rng, self.allowed.len(), k).into_iter() {
            let feature = self.allowed[pick];
            order.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
            let mut left_easy = 0;
            for pos in 0..n - 1 {
                if self.easy[order[pos]] {
                    left_easy += 1;
                }
                let n_left = pos + 1;
                let (lo, hi) = (self.x[order[pos]][feature], self.x[order[pos + 1]][feature]);
                if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let impurity = weighted_gini(n_left, left_easy) + weighted_gini(n - n_left, n_easy - left_easy);
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best.filter(|b| b.impurity < parent - 1e-12)
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn grow_tree(
    x: &[[f64; N_FEATURES]],
    easy: &[bool],
    config: &ForestConfig,
    allowed: &[usize],
    tree: usize,
) -> (DecisionTree, Vec<bool>) {
    let n = x.len();
    let mut rng = tree_rng(config.seed, tree);
    let mut in_bag = vec![false; n];
    let mut idx: Vec<usize> = (0..n)
        .map(|_| {
            let i = rng.gen_range(0..n);
            in_bag[i] = true;
            i
        })
        .collect();
    let mut grower = Grower {
        x,
        easy,
        config,
        allowed: allowed.to_vec(),
        nodes: Vec::new(),
    };
    grower.grow(&mut idx, 0, &mut rng);
    (DecisionTree { nodes: grower.nodes }, in_bag)
}

pub fn train_forest(
    features: &[RouterFeatures],
    labels: &[Difficulty],
    config: &ForestConfig,
) -> Result<Forest, RouterError> {
    if features.len() != labels.len() {
        return Err(RouterError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    if features.len() < 2 {
        return Err(RouterError::TooFewSamples(features.len()));
    }
    let easy: Vec<bool> = labels.iter().map(|l| *l == Difficulty::Easy).collect();
    if easy.iter().all(|e| *e) || easy.iter().all(|e| !*e) {
        return Err(RouterError::SingleClass);
    }
    if config.n_trees == 0 {
        return Err(RouterError::InvalidConfig("n_trees must be at least 1".into()));
    }
    let allowed: Vec<usize> = (0..N_FEATURES)
        .filter(|f| !config.dropped_features.contains(f))
        .collect();
    if allowed.is_empty() {
        return Err(RouterError::InvalidConfig("every feature is dropped".into()));
    }

    let x: Vec<[f64; N_FEATURES]> = features.iter().map(RouterFeatures::to_array).collect();
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(config.n_trees);
    let mut grown: Vec<Option<(DecisionTree, Vec<bool>)>> = vec![None; config.n_trees];
    std::thread::scope(|s| {
        for (w, chunk) in grown.chunks_mut(config.n_trees.div_ceil(workers)).enumerate() {
            let (x, easy, allowed) = (&x, &easy, &allowed);
            let base = w * config.n_trees.div_ceil(workers);
            s.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(grow_tree(x, easy, config, allowed, base + k));
                }
            });
        }
    });

    let mut trees = Vec::with_capacity(config.n_trees);
    let mut oob_sum = vec![0.0; x.len()];
    let mut oob_n = vec![0usize; x.len()];
    for (tree, in_bag) in grown.into_iter().map(|g| g.expect("every tree grown")) {
        for (i, row) in x.iter().enumerate() {
            if !in_bag[i] {
                oob_sum[i] += tree.predict(row);
                oob_n[i] += 1;
            }
        }
        trees.push(tree);
    }
    let scored: Vec<bool> = (0..x.len())
        .filter(|&i| oob_n[i] > 0)
        .map(|i| (oob_sum[i] / oob_n[i] as f64 >= 0.5) == easy[i])
        .collect();
    let oob_accuracy = (!scored.is_empty()).then(|| scored.iter().filter(|c| **c).count() as f64 / scored.len() as f64);

    Ok(Forest { trees, oob_accuracy })
}

/// Mean leaf easy-fraction across trees.
pub fn forest_probability(trees: &[DecisionTree], f: &RouterFeatures) -> f64 {
    let x = f.to_array();
    trees.iter().map(|t| t.predict(&x)).sum::<f64>() / trees.len() as f64
}
