//! Bagged tree ensembles: bootstrap sampling, parallel training, majority
//! voting, out-of-bag error, and the JSON model format.
//!
//! Every tree draws its bootstrap sample and all node-level feature
//! candidates from a private stream derived from (seed, tree index), so
//! training order cannot affect the result and concurrent training equals
//! sequential training bit for bit.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{
    grow_tree, majority_class, route_to_leaf, Mtry, TreeNode, TreeParams,
};
use crate::dataset::{Dataset, FeatureSchema};
use crate::error::Error;
use crate::rng::{stream, DOMAIN_TREE};
use crate::Result;

/// Version tag written into every model file.
pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: Mtry,
    pub min_node_size: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 500, mtry: Mtry::Auto, min_node_size: 1, seed: 0 }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::Parameter("n_trees must be >= 1".into()));
        }
        Ok(())
    }
}

/// A trained ensemble. `inbag[t]` keeps tree t's bootstrap draws in draw
/// order; its out-of-bag rows are recomputed from it, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub format_version: String,
    pub schema: FeatureSchema,
    pub params: ForestParams,
    pub inbag: Vec<Vec<usize>>,
    pub trees: Vec<TreeNode>,
}

impl RandomForestModel {
    /// Rows the model was trained on, recovered from the bootstrap record.
    pub fn n_training_rows(&self) -> usize {
        self.inbag.first().map_or(0, Vec::len)
    }

    /// Sorted distinct rows absent from tree `t`'s bootstrap sample.
    pub fn oob_rows(&self, t: usize) -> Vec<usize> {
        let n = self.n_training_rows();
        let mut seen = vec![false; n];
        for &r in &self.inbag[t] {
            seen[r] = true;
        }
        (0..n).filter(|&r| !seen[r]).collect()
    }
}

/// One ensemble prediction: per-class vote fractions and the winning class
/// (lowest class index on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct VoteResult {
    pub predicted: usize,
    pub vote_fractions: Vec<f64>,
}

fn vote_result(vote_counts: &[u64]) -> VoteResult {
    let total: u64 = vote_counts.iter().sum();
    VoteResult {
        predicted: majority_class(vote_counts),
        vote_fractions: vote_counts.iter().map(|&v| v as f64 / total as f64).collect(),
    }
}

/// Draw an n-out-of-n bootstrap sample from `rng`.
///
/// Returns the sample in draw order plus the sorted set of indices never
/// drawn. Roughly 63.2% of indices are expected to appear in the sample.
pub fn bootstrap_sample(n: usize, rng: &mut impl Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 1 {
        return Err(Error::Parameter("bootstrap_sample: n must be >= 1".into()));
    }
    let mut inbag = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for _ in 0..n {
        let i = rng.gen_range(0..n);
        inbag.push(i);
        seen[i] = true;
    }
    let oob = (0..n).filter(|&i| !seen[i]).collect();
    Ok((inbag, oob))
}

fn validate_training_data(data: &Dataset) -> Result<()> {
    if data.n_rows() < 2 {
        return Err(Error::Parameter(format!(
            "training requires at least 2 rows, got {}",
            data.n_rows()
        )));
    }
    let present = data.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::DegenerateData(
            "training requires at least 2 distinct classes".into(),
        ));
    }
    Ok(())
}

fn train_one(data: &Dataset, params: &ForestParams, t: usize) -> (Vec<usize>, TreeNode) {
    let mut rng = stream(params.seed, DOMAIN_TREE, t as u64);
    let (inbag, _oob) = bootstrap_sample(data.n_rows(), &mut rng).expect("n >= 2");
    let mut tree_params =
        TreeParams { min_node_size: params.min_node_size, mtry: params.mtry, rng };
    let tree = grow_tree(data, &inbag, &mut tree_params).expect("validated params");
    (inbag, tree)
}

fn assemble(data: &Dataset, params: &ForestParams, grown: Vec<(Vec<usize>, TreeNode)>) -> RandomForestModel {
    let (inbag, trees) = grown.into_iter().unzip();
    RandomForestModel {
        format_version: FORMAT_VERSION.to_string(),
        schema: data.schema().clone(),
        params: params.clone(),
        inbag,
        trees,
    }
}

/// Train `params.n_trees` trees, in parallel. The result is identical to
/// [`train_forest_serial`] on the same inputs.
pub fn train_forest(data: &Dataset, params: &ForestParams) -> Result<RandomForestModel> {
    params.validate()?;
    validate_training_data(data)?;
    if let Mtry::Fixed(k) = params.mtry {
        let p = data.schema().n_features();
        if k < 1 || k > p {
            return Err(Error::Parameter(format!("mtry {k} must satisfy 1 <= mtry <= {p}")));
        }
    }
    let grown: Vec<_> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| train_one(data, params, t))
        .collect();
    Ok(assemble(data, params, grown))
}

/// Single-threaded training, mainly a reference point for the concurrency
/// contract.
pub fn train_forest_serial(data: &Dataset, params: &ForestParams) -> Result<RandomForestModel> {
    params.validate()?;
    validate_training_data(data)?;
    if let Mtry::Fixed(k) = params.mtry {
        let p = data.schema().n_features();
        if k < 1 || k > p {
            return Err(Error::Parameter(format!("mtry {k} must satisfy 1 <= mtry <= {p}")));
        }
    }
    let grown: Vec<_> = (0..params.n_trees).map(|t| train_one(data, params, t)).collect();
    Ok(assemble(data, params, grown))
}

/// Majority vote over all trees for one schema-valid record.
pub fn predict_forest(model: &RandomForestModel, record: &[usize]) -> Result<VoteResult> {
    model.schema.validate_record(record)?;
    let mut votes = vec![0u64; model.schema.n_classes()];
    for tree in &model.trees {
        votes[route_to_leaf(tree, record).class] += 1;
    }
    Ok(vote_result(&votes))
}

/// Out-of-bag evaluation of a model against its own training data.
#[derive(Debug, Clone, PartialEq)]
pub struct OobReport {
    /// Misclassified fraction over the evaluated rows.
    pub error_rate: f64,
    /// Per-row OOB vote; `None` for rows in-bag in every tree.
    pub predictions: Vec<Option<VoteResult>>,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Predict each training row using only the trees that never sampled it,
/// and report the resulting error rate.
pub fn oob_error(model: &RandomForestModel, data: &Dataset) -> Result<OobReport> {
    let n = data.n_rows();
    if model.n_training_rows() != n {
        return Err(Error::Consistency(format!(
            "model was trained on {} rows, dataset has {n}",
            model.n_training_rows()
        )));
    }
    if model.schema != *data.schema() {
        return Err(Error::Consistency("model schema differs from dataset schema".into()));
    }

    // inbag_mask[t][r]: row r was drawn into tree t's bootstrap sample.
    let inbag_mask: Vec<Vec<bool>> = model
        .inbag
        .iter()
        .map(|draws| {
            let mut mask = vec![false; n];
            for &r in draws {
                mask[r] = true;
            }
            mask
        })
        .collect();

    let k = model.schema.n_classes();
    let mut predictions = Vec::with_capacity(n);
    let mut evaluated = 0usize;
    let mut wrong = 0usize;
    for r in 0..n {
        let mut votes = vec![0u64; k];
        let mut any = false;
        for (t, tree) in model.trees.iter().enumerate() {
            if !inbag_mask[t][r] {
                votes[route_to_leaf(tree, data.row(r)).class] += 1;
                any = true;
            }
        }
        if any {
            let vote = vote_result(&votes);
            evaluated += 1;
            if vote.predicted != data.target(r) {
                wrong += 1;
            }
            predictions.push(Some(vote));
        } else {
            predictions.push(None);
        }
    }
    if evaluated == 0 {
        return Err(Error::UndefinedInput(
            "every row was in-bag in every tree; no out-of-bag rows to evaluate".into(),
        ));
    }
    Ok(OobReport {
        error_rate: wrong as f64 / evaluated as f64,
        predictions,
        evaluated,
        skipped: n - evaluated,
    })
}

/// Serialize a model to its canonical JSON form: compact, fixed field
/// order, terminated by a single newline.
pub fn serialize_model(model: &RandomForestModel) -> String {
    let mut out = serde_json::to_string(model).expect("model serialization cannot fail");
    out.push('\n');
    out
}

/// Parse and structurally validate a model document.
pub fn parse_model(text: &str) -> Result<RandomForestModel> {
    let model: RandomForestModel =
        serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    validate_model(&model)?;
    Ok(model)
}

fn validate_model(model: &RandomForestModel) -> Result<()> {
    if model.format_version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format_version {:?}, expected {FORMAT_VERSION:?}",
            model.format_version
        )));
    }
    if model.trees.len() != model.params.n_trees {
        return Err(Error::ModelFormat(format!(
            "model holds {} trees but declares n_trees = {}",
            model.trees.len(),
            model.params.n_trees
        )));
    }
    if model.inbag.len() != model.trees.len() {
        return Err(Error::ModelFormat("one inbag record required per tree".into()));
    }
    let n = model.n_training_rows();
    if n == 0 {
        return Err(Error::ModelFormat("empty inbag record".into()));
    }
    for (t, draws) in model.inbag.iter().enumerate() {
        if draws.len() != n {
            return Err(Error::ModelFormat(format!(
                "inbag[{t}] holds {} draws, expected {n}",
                draws.len()
            )));
        }
        if let Some(&bad) = draws.iter().find(|&&r| r >= n) {
            return Err(Error::ModelFormat(format!("inbag[{t}] references row {bad} >= {n}")));
        }
    }
    for (t, tree) in model.trees.iter().enumerate() {
        validate_tree(tree, &model.schema)
            .map_err(|e| Error::MalformedTree(format!("tree {t}: {e}")))?;
    }
    Ok(())
}

fn validate_tree(node: &TreeNode, schema: &FeatureSchema) -> std::result::Result<(), String> {
    match node {
        TreeNode::Leaf { leaf } => {
            if leaf.counts.len() != schema.n_classes() {
                return Err(format!(
                    "leaf holds {} class counts, schema has {} classes",
                    leaf.counts.len(),
                    schema.n_classes()
                ));
            }
            if leaf.class >= schema.n_classes() {
                return Err(format!("leaf class {} out of range", leaf.class));
            }
            if leaf.counts.iter().sum::<u64>() == 0 {
                return Err("leaf with all-zero counts".into());
            }
            Ok(())
        }
        TreeNode::Internal { split, left, right } => {
            if split.feature >= schema.n_features() {
                return Err(format!("split feature {} out of range", split.feature));
            }
            let m = schema.n_levels(split.feature);
            if split.left_levels.is_empty() || split.left_levels.len() >= m {
                return Err("split left_levels must be a nonempty proper subset".into());
            }
            if split.left_levels[0] != 0 {
                return Err("split left_levels must contain level 0".into());
            }
            if !split.left_levels.windows(2).all(|w| w[0] < w[1]) {
                return Err("split left_levels must be strictly ascending".into());
            }
            if *split.left_levels.last().unwrap() >= m {
                return Err("split level out of range".into());
            }
            validate_tree(left, schema)?;
            validate_tree(right, schema)
        }
    }
}
