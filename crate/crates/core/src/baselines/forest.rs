use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_rows, PixelClassifier, PixelRow};
use crate::error::{Error, Result};
use crate::{argmax_lowest, NUM_BANDS, NUM_CLASSES};

pub const FOREST_TREES: usize = 32;
/// Candidate features drawn per split, `ceil(sqrt(10))`.
pub const SPLIT_FEATURES: usize = 4;

/// A node of a flattened tree. Children are indices into the same array.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u8,
        threshold: f32,
        left: u32,
        right: u32,
    },
    /// Class histogram of the training rows that reached the leaf.
    Leaf { counts: [u32; NUM_CLASSES] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// Validates child indices (each must point forward, so the tree is
    /// acyclic), feature ranges, thresholds and leaf counts.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::BadModel("tree without nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let ok_child = |c: u32| (c as usize) > i && (c as usize) < nodes.len();
                    if feature as usize >= NUM_BANDS || !threshold.is_finite() || !ok_child(left) || !ok_child(right) {
                        return Err(Error::BadModel(format!("malformed split node {i}")));
                    }
                }
                TreeNode::Leaf { counts } => {
                    if counts.iter().all(|&c| c == 0) {
                        return Err(Error::BadModel(format!("empty leaf {i}")));
                    }
                }
            }
        }
        Ok(DecisionTree { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf(&self, features: &[f32; NUM_BANDS]) -> &[u32; NUM_CLASSES] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if features[*feature as usize] <= *threshold {
                        *left
                    } else {
                        *right
                    } as usize;
                }
                TreeNode::Leaf { counts } => return counts,
            }
        }
    }

    /// Majority class of the reached leaf, lowest id on ties.
    pub fn predict(&self, features: &[f32; NUM_BANDS]) -> u8 {
        argmax_lowest(self.leaf(features)) as u8
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Bagged decision trees combined by majority vote.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<DecisionTree>,
}

impl Forest {
    pub fn from_trees(trees: Vec<DecisionTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::BadModel("forest without trees".into()));
        }
        Ok(Forest { trees })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Per-class tree votes.
    pub fn votes(&self, features: &[f32; NUM_BANDS]) -> [u32; NUM_CLASSES] {
        let mut votes = [0; NUM_CLASSES];
        for t in &self.trees {
            votes[t.predict(features) as usize] += 1;
        }
        votes
    }
}

impl PixelClassifier for Forest {
    fn classify(&self, features: &[f32; NUM_BANDS]) -> u8 {
        argmax_lowest(&self.votes(features)) as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: FOREST_TREES,
            seed: 0,
        }
    }
}

/// Grows `config.trees` unpruned trees, each on its own bootstrap resample
/// and its own RNG stream, so the result does not depend on thread count.
pub fn train_rf(rows: &[PixelRow], config: &ForestConfig) -> Result<Forest> {
    check_rows(rows)?;
    if config.trees == 0 {
        return Err(Error::invalid("a forest needs at least one tree"));
    }
    let trees = (0..config.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64 + 1);
            let sample: Vec<u32> = (0..rows.len())
                .map(|_| rng.random_range(0..rows.len() as u32))
                .collect();
            grow_tree(rows, sample, &mut rng)
        })
        .collect();
    Forest::from_trees(trees)
}

fn histogram(rows: &[PixelRow], idx: &[u32]) -> [u32; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for &i in idx {
        counts[rows[i as usize].label as usize] += 1;
    }
    counts
}

struct Candidate {
    feature: usize,
    threshold: f32,
    /// Sum over both children of `sum_k n_k^2 / n`; larger means lower
    /// weighted Gini impurity.
    purity: f64,
}

/// Best threshold on one feature, or `None` when the feature is constant
/// over the node.
fn best_split(
    rows: &[PixelRow],
    idx: &[u32],
    feature: usize,
    total: &[u32; NUM_CLASSES],
    buf: &mut Vec<(f32, u8)>,
) -> Option<Candidate> {
    buf.clear();
    buf.extend(idx.iter().map(|&i| {
        let r = &rows[i as usize];
        (r.features[feature], r.label)
    }));
    buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    if buf[0].0 == buf[buf.len() - 1].0 {
        return None;
    }
    let n = buf.len() as f64;
    let mut left = [0u32; NUM_CLASSES];
    let mut sq_left = 0.0f64;
    let mut sq_right: f64 = total.iter().map(|&c| (c as f64).powi(2)).sum();
    let mut best: Option<Candidate> = None;
    for k in 0..buf.len() - 1 {
        let c = buf[k].1 as usize;
        let l = left[c] as f64;
        let r = (total[c] - left[c]) as f64;
        sq_left += 2.0 * l + 1.0;
        sq_right -= 2.0 * r - 1.0;
        left[c] += 1;
        let (a, b) = (buf[k].0, buf[k + 1].0);
        if a == b {
            continue;
        }
        let n_left = (k + 1) as f64;
        let purity = sq_left / n_left + sq_right / (n - n_left);
        if best.as_ref().is_none_or(|s| purity > s.purity) {
            let mid = a + (b - a) / 2.0;
            let threshold = if mid < b { mid } else { a };
            best = Some(Candidate {
                feature,
                threshold,
                purity,
            });
        }
    }
    best
}

fn grow_tree(rows: &[PixelRow], mut idx: Vec<u32>, rng: &mut ChaCha8Rng) -> DecisionTree {
    let mut nodes = vec![TreeNode::Leaf {
        counts: [0; NUM_CLASSES],
    }];
    // (node index, start, end) ranges of `idx` still to be resolved.
    let mut stack = vec![(0usize, 0usize, idx.len())];
    let mut buf = Vec::new();
    while let Some((node, start, end)) = stack.pop() {
        let slice = &mut idx[start..end];
        let counts = histogram(rows, slice);
        let pure = counts.iter().filter(|&&c| c > 0).count() == 1;
        let split = if pure {
            None
        } else {
            choose_split(rows, slice, &counts, rng, &mut buf)
        };
        let Some(split) = split else {
            nodes[node] = TreeNode::Leaf { counts };
            continue;
        };
        // Partition in place: left rows first.
        let mut mid = 0;
        for i in 0..slice.len() {
            if rows[slice[i] as usize].features[split.feature] <= split.threshold {
                slice.swap(i, mid);
                mid += 1;
            }
        }
        let left = nodes.len();
        nodes.push(TreeNode::Leaf {
            counts: [0; NUM_CLASSES],
        });
        nodes.push(TreeNode::Leaf {
            counts: [0; NUM_CLASSES],
        });
        nodes[node] = TreeNode::Split {
            feature: split.feature as u8,
            threshold: split.threshold,
            left: left as u32,
            right: left as u32 + 1,
        };
        stack.push((left + 1, start + mid, end));
        stack.push((left, start, start + mid));
    }
    DecisionTree { nodes }
}

/// Searches 4 random features; if all are constant over the node, keeps
/// drawing the remaining features until one can split.
fn choose_split(
    rows: &[PixelRow],
    idx: &[u32],
    counts: &[u32; NUM_CLASSES],
    rng: &mut ChaCha8Rng,
    buf: &mut Vec<(f32, u8)>,
) -> Option<Candidate> {
    let mut features: [usize; NUM_BANDS] = std::array::from_fn(|f| f);
    features.shuffle(rng);
    let mut best: Option<Candidate> = None;
    for (tried, &f) in features.iter().enumerate() {
        if tried >= SPLIT_FEATURES && best.is_some() {
            break;
        }
        if let Some(c) = best_split(rows, idx, f, counts, buf) {
            if best.as_ref().is_none_or(|b| c.purity > b.purity) {
                best = Some(c);
            }
        }
    }
    best
}
