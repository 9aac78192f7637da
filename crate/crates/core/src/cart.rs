//! Binary classification trees over categorical features.
//!
//! Splits are level subsets found by exhaustive search: for every candidate
//! feature, every canonical nonempty proper subset of its levels is scored
//! by size-weighted child Gini impurity. Candidate comparison runs on
//! cross-multiplied integer count aggregates, so split choice is exact and
//! independent of floating-point rounding.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSchema};
use crate::error::Error;
use crate::Result;

/// A binary split: rows whose `feature` level lies in `left_levels` go left.
///
/// Canonical form: `left_levels` is sorted, contains level 0, and is a
/// nonempty proper subset of the feature's levels. Requiring level 0 on the
/// left removes mirror-image duplicates from the search space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub feature: usize,
    pub left_levels: Vec<usize>,
}

impl SplitSpec {
    pub fn goes_left(&self, level: usize) -> bool {
        self.left_levels.contains(&level)
    }
}

/// Class counts and majority class at a terminal node.
///
/// `class` is the lowest class index among those tied for the maximum
/// count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafNode {
    pub counts: Vec<u64>,
    pub class: usize,
}

/// A grown tree node. Serializes as `{"leaf": {...}}` for terminals and
/// `{"split": {...}, "left": ..., "right": ...}` for internal nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Leaf {
        leaf: LeafNode,
    },
    Internal {
        split: SplitSpec,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn leaf(counts: Vec<u64>) -> Self {
        let class = majority_class(&counts);
        TreeNode::Leaf { leaf: LeafNode { counts, class } }
    }

    /// Number of training rows that reached this subtree.
    pub fn row_count(&self) -> u64 {
        match self {
            TreeNode::Leaf { leaf } => leaf.counts.iter().sum(),
            TreeNode::Internal { left, right, .. } => left.row_count() + right.row_count(),
        }
    }

    /// Leaves reachable from this subtree.
    pub fn leaves(&self) -> Vec<&LeafNode> {
        match self {
            TreeNode::Leaf { leaf } => vec![leaf],
            TreeNode::Internal { left, right, .. } => {
                let mut out = left.leaves();
                out.extend(right.leaves());
                out
            }
        }
    }

    /// Whether `feature` appears in any split of this subtree.
    pub fn uses_feature(&self, feature: usize) -> bool {
        match self {
            TreeNode::Leaf { .. } => false,
            TreeNode::Internal { split, left, right } => {
                split.feature == feature
                    || left.uses_feature(feature)
                    || right.uses_feature(feature)
            }
        }
    }
}

/// Lowest class index among those tied for the maximum count.
pub fn majority_class(counts: &[u64]) -> usize {
    let mut best = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Number of split-candidate features drawn at each node.
///
/// Serializes as the string `"auto"` or a plain integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mtry {
    /// `floor(sqrt(p))`, clamped to `[1, p]`.
    Auto,
    Fixed(usize),
}

impl Mtry {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            Mtry::Auto => ((n_features as f64).sqrt().floor() as usize).clamp(1, n_features),
            Mtry::Fixed(k) => k,
        }
    }
}

impl Serialize for Mtry {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Mtry::Auto => serializer.serialize_str("auto"),
            Mtry::Fixed(k) => serializer.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Mtry {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct MtryVisitor;
        impl serde::de::Visitor<'_> for MtryVisitor {
            type Value = Mtry;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("\"auto\" or a positive integer")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Mtry, E> {
                if v == "auto" {
                    Ok(Mtry::Auto)
                } else {
                    Err(E::custom(format!("unknown mtry value {v:?}")))
                }
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Mtry, E> {
                Ok(Mtry::Fixed(v as usize))
            }
        }
        deserializer.deserialize_any(MtryVisitor)
    }
}

/// Growth parameters plus the node-level random stream.
#[derive(Debug, Clone)]
pub struct TreeParams {
    pub min_node_size: usize,
    pub mtry: Mtry,
    pub rng: ChaCha8Rng,
}

impl TreeParams {
    fn validate(&self, n_features: usize) -> Result<()> {
        if self.min_node_size < 1 {
            return Err(Error::Parameter("min_node_size must be >= 1".into()));
        }
        if let Mtry::Fixed(k) = self.mtry {
            if k < 1 || k > n_features {
                return Err(Error::Parameter(format!(
                    "mtry {k} must satisfy 1 <= mtry <= {n_features}"
                )));
            }
        }
        Ok(())
    }
}

/// Gini impurity `1 - sum_j (count_j / total)^2`.
pub fn gini_impurity(class_counts: &[u64]) -> Result<f64> {
    let total: u64 = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::UndefinedInput("impurity of all-zero class counts".into()));
    }
    let total = total as f64;
    let sum_sq: f64 = class_counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p
        })
        .sum();
    Ok(1.0 - sum_sq)
}

/// A chosen split together with its size-weighted child impurity.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub spec: SplitSpec,
    pub weighted_impurity: f64,
}

/// Integer aggregates of one candidate split: child sizes and per-child
/// sums of squared class counts. Weighted child impurity is
/// `(n - a/n_left - b/n_right) / n`, so candidates are ranked by
/// `a/n_left + b/n_right`, compared via cross-multiplication in u128.
#[derive(Debug, Clone, Copy)]
struct SplitScore {
    n_left: u64,
    n_right: u64,
    a: u64,
    b: u64,
}

impl SplitScore {
    fn better_than(&self, other: &SplitScore) -> bool {
        let lhs = (self.a as u128 * self.n_right as u128 + self.b as u128 * self.n_left as u128)
            * (other.n_left as u128 * other.n_right as u128);
        let rhs = (other.a as u128 * other.n_right as u128
            + other.b as u128 * other.n_left as u128)
            * (self.n_left as u128 * self.n_right as u128);
        lhs > rhs
    }

    /// Strictly below the parent's impurity, where `parent_sq` is the
    /// parent's sum of squared class counts.
    fn improves(&self, parent_sq: u64) -> bool {
        let n = (self.n_left + self.n_right) as u128;
        let lhs =
            n * (self.a as u128 * self.n_right as u128 + self.b as u128 * self.n_left as u128);
        let rhs = parent_sq as u128 * self.n_left as u128 * self.n_right as u128;
        lhs > rhs
    }

    fn weighted_impurity(&self) -> f64 {
        let n = (self.n_left + self.n_right) as f64;
        let gl = 1.0 - self.a as f64 / (self.n_left as f64 * self.n_left as f64);
        let gr = 1.0 - self.b as f64 / (self.n_right as f64 * self.n_right as f64);
        (self.n_left as f64 * gl + self.n_right as f64 * gr) / n
    }
}

/// Canonical left-level subsets for a feature with `n_levels` levels, in
/// lexicographic order of the sorted level lists.
fn canonical_subsets(n_levels: usize) -> Vec<Vec<usize>> {
    let extra = n_levels - 1;
    let full = (1usize << extra) - 1;
    let mut subsets = Vec::with_capacity(full);
    for mask in 0..full {
        let mut levels = vec![0usize];
        for bit in 0..extra {
            if mask & (1 << bit) != 0 {
                levels.push(bit + 1);
            }
        }
        subsets.push(levels);
    }
    subsets.sort();
    subsets
}

/// Exhaustive Gini-minimizing split search over `candidate_features`.
///
/// Returns `None` when no candidate split yields two nonempty children or
/// none strictly reduces the parent impurity. Ties break toward the lowest
/// feature index, then the lexicographically smallest left-level set.
pub fn best_split(
    data: &Dataset,
    row_indices: &[usize],
    candidate_features: &[usize],
) -> Result<Option<SplitResult>> {
    best_split_with_min(data, row_indices, candidate_features, 1)
}

/// [`best_split`] restricted to splits whose children both hold at least
/// `min_child` rows.
pub(crate) fn best_split_with_min(
    data: &Dataset,
    row_indices: &[usize],
    candidate_features: &[usize],
    min_child: usize,
) -> Result<Option<SplitResult>> {
    if row_indices.is_empty() {
        return Err(Error::Parameter("best_split: empty row set".into()));
    }
    if candidate_features.is_empty() {
        return Err(Error::Parameter("best_split: empty candidate feature set".into()));
    }
    let schema = data.schema();
    let n_classes = schema.n_classes();
    for &f in candidate_features {
        if f >= schema.n_features() {
            return Err(Error::Parameter(format!("best_split: feature {f} out of range")));
        }
    }

    let mut parent_counts = vec![0u64; n_classes];
    for &r in row_indices {
        parent_counts[data.target(r)] += 1;
    }
    let parent_sq: u64 = parent_counts.iter().map(|&c| c * c).sum();
    let min_child = min_child.max(1) as u64;

    let mut best: Option<(SplitSpec, SplitScore)> = None;
    for &feature in candidate_features {
        let n_levels = schema.n_levels(feature);
        // Per-level class counts for this feature over the node's rows.
        let mut table = vec![vec![0u64; n_classes]; n_levels];
        for &r in row_indices {
            table[data.row(r)[feature]][data.target(r)] += 1;
        }
        for left_levels in canonical_subsets(n_levels) {
            let mut left_counts = vec![0u64; n_classes];
            for &level in &left_levels {
                for (c, cnt) in table[level].iter().enumerate() {
                    left_counts[c] += cnt;
                }
            }
            let n_left: u64 = left_counts.iter().sum();
            let n_total: u64 = parent_counts.iter().sum();
            let n_right = n_total - n_left;
            if n_left < min_child || n_right < min_child {
                continue;
            }
            let a: u64 = left_counts.iter().map(|&c| c * c).sum();
            let b: u64 = parent_counts
                .iter()
                .zip(&left_counts)
                .map(|(&p, &l)| {
                    let r = p - l;
                    r * r
                })
                .sum();
            let score = SplitScore { n_left, n_right, a, b };
            let replace = match &best {
                None => true,
                Some((_, incumbent)) => score.better_than(incumbent),
            };
            if replace {
                best = Some((SplitSpec { feature, left_levels }, score));
            }
        }
    }

    Ok(best.and_then(|(spec, score)| {
        if score.improves(parent_sq) {
            Some(SplitResult { spec, weighted_impurity: score.weighted_impurity() })
        } else {
            None
        }
    }))
}

fn is_pure(counts: &[u64]) -> bool {
    counts.iter().filter(|&&c| c > 0).count() <= 1
}

/// Grow a tree over the (multiset of) `row_indices`.
///
/// Growth recurses until a node is class-pure, falls under
/// `2 * min_node_size` rows, or admits no impurity-reducing split. At each
/// node, `mtry` candidate features are drawn without replacement from the
/// params' random stream; `mtry = p` reproduces plain CART. Nodes are
/// visited root first, then left subtree, then right, so identical stream
/// states grow identical trees.
pub fn grow_tree(data: &Dataset, row_indices: &[usize], params: &mut TreeParams) -> Result<TreeNode> {
    if row_indices.is_empty() {
        return Err(Error::Parameter("grow_tree: empty row set".into()));
    }
    let p = data.schema().n_features();
    params.validate(p)?;
    let mtry = params.mtry.resolve(p);
    Ok(grow_node(data, row_indices.to_vec(), params, mtry))
}

fn grow_node(data: &Dataset, rows: Vec<usize>, params: &mut TreeParams, mtry: usize) -> TreeNode {
    let n_classes = data.schema().n_classes();
    let mut counts = vec![0u64; n_classes];
    for &r in &rows {
        counts[data.target(r)] += 1;
    }
    if is_pure(&counts) || rows.len() < 2 * params.min_node_size {
        return TreeNode::leaf(counts);
    }

    let p = data.schema().n_features();
    let mut candidates: Vec<usize> = sample(&mut params.rng, p, mtry).into_vec();
    candidates.sort_unstable();

    let found = best_split_with_min(data, &rows, &candidates, params.min_node_size)
        .expect("nonempty rows and candidates");
    let Some(SplitResult { spec, .. }) = found else {
        return TreeNode::leaf(counts);
    };

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&r| spec.goes_left(data.row(r)[spec.feature]));
    let left = grow_node(data, left_rows, params, mtry);
    let right = grow_node(data, right_rows, params, mtry);
    TreeNode::Internal { split: spec, left: Box::new(left), right: Box::new(right) }
}

/// Prediction from a single tree: the leaf's majority class and its
/// normalized class distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub distribution: Vec<f64>,
}

/// Route a schema-valid record to its leaf.
pub fn predict_tree(tree: &TreeNode, record: &[usize], schema: &FeatureSchema) -> Result<Prediction> {
    schema.validate_record(record)?;
    let leaf = route_to_leaf(tree, record);
    let total: u64 = leaf.counts.iter().sum();
    let distribution = leaf.counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(Prediction { class: leaf.class, distribution })
}

/// Routing without schema validation; callers must have validated `record`.
pub(crate) fn route_to_leaf<'a>(tree: &'a TreeNode, record: &[usize]) -> &'a LeafNode {
    let mut node = tree;
    loop {
        match node {
            TreeNode::Leaf { leaf } => return leaf,
            TreeNode::Internal { split, left, right } => {
                node = if split.goes_left(record[split.feature]) { left } else { right };
            }
        }
    }
}
