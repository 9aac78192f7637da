//! Variable importance and pruning.
//!
//! Two measures per feature: Mean-Decrease-in-Accuracy (drop in per-tree
//! out-of-bag accuracy when the feature's OOB column is permuted) and
//! Mean-Decrease-in-Gini (root-normalized impurity decrease of the
//! feature's splits, averaged over trees). Percentages and the threshold
//! pruning step operate on either measure's percentage form.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::cart::{gini_impurity, route_to_leaf, TreeNode};
use crate::dataset::Dataset;
use crate::error::Error;
use crate::forest::RandomForestModel;
use crate::rng::{stream2, DOMAIN_PERM};
use crate::Result;

fn check_model_data(model: &RandomForestModel, data: &Dataset) -> Result<()> {
    if model.n_training_rows() != data.n_rows() {
        return Err(Error::Consistency(format!(
            "model was trained on {} rows, dataset has {}",
            model.n_training_rows(),
            data.n_rows()
        )));
    }
    if model.schema != *data.schema() {
        return Err(Error::Consistency("model schema differs from dataset schema".into()));
    }
    Ok(())
}

/// Per-tree OOB accuracy with row `feature` values overridden by `column`
/// (when given).
fn tree_oob_accuracy(
    tree: &TreeNode,
    data: &Dataset,
    oob: &[usize],
    feature_override: Option<(usize, &[usize])>,
) -> f64 {
    let mut correct = 0usize;
    let mut record = Vec::new();
    for (slot, &r) in oob.iter().enumerate() {
        let class = match feature_override {
            None => route_to_leaf(tree, data.row(r)).class,
            Some((f, column)) => {
                record.clear();
                record.extend_from_slice(data.row(r));
                record[f] = column[slot];
                route_to_leaf(tree, &record).class
            }
        };
        if class == data.target(r) {
            correct += 1;
        }
    }
    correct as f64 / oob.len() as f64
}

/// Mean-Decrease-in-Accuracy per feature.
///
/// For each tree, accuracy on its out-of-bag rows is compared against
/// accuracy on the same rows with one feature's column shuffled; the
/// shuffle stream is derived from (perm_seed, tree, feature), so the
/// result is a pure function of (model, data, perm_seed). Trees with no
/// out-of-bag rows are skipped.
pub fn mean_decrease_accuracy(
    model: &RandomForestModel,
    data: &Dataset,
    perm_seed: u64,
) -> Result<Vec<f64>> {
    check_model_data(model, data)?;
    let p = model.schema.n_features();

    let per_tree: Vec<Option<Vec<f64>>> = model
        .trees
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            let oob = model.oob_rows(t);
            if oob.is_empty() {
                return None;
            }
            let baseline = tree_oob_accuracy(tree, data, &oob, None);
            let drops = (0..p)
                .map(|f| {
                    let mut column: Vec<usize> =
                        oob.iter().map(|&r| data.row(r)[f]).collect();
                    let mut rng = stream2(perm_seed, DOMAIN_PERM, t as u64, f as u64);
                    column.shuffle(&mut rng);
                    baseline - tree_oob_accuracy(tree, data, &oob, Some((f, &column)))
                })
                .collect();
            Some(drops)
        })
        .collect();

    let used = per_tree.iter().flatten().count();
    if used == 0 {
        return Err(Error::UndefinedInput(
            "every tree's bootstrap sample covered all rows; no OOB rows to permute".into(),
        ));
    }
    let mut mda = vec![0.0f64; p];
    for drops in per_tree.iter().flatten() {
        for (f, d) in drops.iter().enumerate() {
            mda[f] += d;
        }
    }
    for v in &mut mda {
        *v /= used as f64;
    }
    Ok(mda)
}

/// Class counts reaching `node`, plus the per-feature accumulation of
/// `(n G - n_l G_l - n_r G_r) / n_root` over its internal descendants.
fn walk_gini(node: &TreeNode, n_root: f64, acc: &mut [f64]) -> Vec<u64> {
    match node {
        TreeNode::Leaf { leaf } => leaf.counts.clone(),
        TreeNode::Internal { split, left, right } => {
            let lc = walk_gini(left, n_root, acc);
            let rc = walk_gini(right, n_root, acc);
            let counts: Vec<u64> = lc.iter().zip(&rc).map(|(a, b)| a + b).collect();
            let n: u64 = counts.iter().sum();
            let nl: u64 = lc.iter().sum();
            let nr: u64 = rc.iter().sum();
            let g = gini_impurity(&counts).expect("internal node is nonempty");
            let gl = gini_impurity(&lc).expect("left child is nonempty");
            let gr = gini_impurity(&rc).expect("right child is nonempty");
            acc[split.feature] +=
                (n as f64 * g - nl as f64 * gl - nr as f64 * gr) / n_root;
            counts
        }
    }
}

/// Mean-Decrease-in-Gini per feature: every split's impurity decrease,
/// weighted by node size and normalized by its tree's root size, summed
/// and averaged over trees. Features never split on score exactly 0.
pub fn mean_decrease_gini(model: &RandomForestModel) -> Vec<f64> {
    let p = model.schema.n_features();
    let mut mdg = vec![0.0f64; p];
    for tree in &model.trees {
        let n_root = tree.row_count() as f64;
        walk_gini(tree, n_root, &mut mdg);
    }
    for v in &mut mdg {
        *v /= model.trees.len() as f64;
    }
    mdg
}

/// Convert nonnegative raw importances to percentages of their total.
pub fn percent_importance(imps: &[f64]) -> Result<Vec<f64>> {
    if imps.is_empty() {
        return Err(Error::Parameter("percent_importance: empty input".into()));
    }
    if let Some(bad) = imps.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Parameter(format!(
            "percent_importance: values must be finite and >= 0, got {bad}"
        )));
    }
    let total: f64 = imps.iter().sum();
    if total == 0.0 {
        return Err(Error::DegenerateImportance);
    }
    Ok(imps.iter().map(|v| v / total * 100.0).collect())
}

/// Outcome of threshold pruning at percentage `threshold_p`.
///
/// `tie_groups` lists equal-percentage feature groups that ended up with
/// members on both sides of the cut; those boundaries are judgment calls
/// for the report's reader, not hard mistakes.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    pub threshold_p: f64,
    /// Ascending feature indices removed by the threshold.
    pub pruned: Vec<usize>,
    /// Ascending feature indices that remain.
    pub kept: Vec<usize>,
    pub tie_groups: Vec<Vec<usize>>,
}

/// Prune the least important features until their percentage sum first
/// reaches `threshold_p`.
///
/// Features are taken in ascending percentage order (ties by ascending
/// index) and accumulated; the feature whose addition crosses the
/// threshold is itself pruned. The last remaining feature is never pruned,
/// even if the threshold was not reached.
pub fn prune_features(percentages: &[f64], threshold_p: f64) -> Result<PruneResult> {
    if !(threshold_p > 0.0 && threshold_p < 100.0) {
        return Err(Error::Parameter(format!(
            "prune threshold {threshold_p} must lie strictly between 0 and 100"
        )));
    }
    if percentages.is_empty() {
        return Err(Error::Parameter("prune_features: empty input".into()));
    }
    if let Some(bad) = percentages.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Parameter(format!(
            "prune_features: percentages must be finite and >= 0, got {bad}"
        )));
    }
    let total: f64 = percentages.iter().sum();
    if (total - 100.0).abs() > 1e-6 {
        return Err(Error::Parameter(format!(
            "prune_features: percentages sum to {total}, expected 100"
        )));
    }

    let mut order: Vec<usize> = (0..percentages.len()).collect();
    order.sort_by(|&a, &b| {
        percentages[a].partial_cmp(&percentages[b]).unwrap().then(a.cmp(&b))
    });

    let mut pruned = Vec::new();
    let mut sum = 0.0f64;
    for (pos, &f) in order.iter().enumerate() {
        if pos == order.len() - 1 {
            break;
        }
        pruned.push(f);
        sum += percentages[f];
        if sum >= threshold_p {
            break;
        }
    }
    let kept: Vec<usize> =
        (0..percentages.len()).filter(|f| !pruned.contains(f)).collect();
    pruned.sort_unstable();

    let mut tie_groups = Vec::new();
    let mut pos = 0;
    while pos < order.len() {
        let mut end = pos + 1;
        while end < order.len() && percentages[order[end]] == percentages[order[pos]] {
            end += 1;
        }
        if end - pos > 1 {
            let group = &order[pos..end];
            let any_pruned = group.iter().any(|f| pruned.contains(f));
            let any_kept = group.iter().any(|f| kept.contains(f));
            if any_pruned && any_kept {
                let mut g = group.to_vec();
                g.sort_unstable();
                tie_groups.push(g);
            }
        }
        pos = end;
    }

    Ok(PruneResult { threshold_p, pruned, kept, tie_groups })
}

/// Both importance measures for one model, with percentage forms and the
/// MDG ranking used everywhere downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub mda: Vec<f64>,
    pub mdg: Vec<f64>,
    /// MDG percentages; all zeros when every MDG value is 0.
    pub percent_mdg: Vec<f64>,
    /// Percentages of MDA clamped at 0 (permutation noise can dip below
    /// zero); all zeros when nothing remains positive.
    pub percent_mda: Vec<f64>,
    /// Feature indices by descending MDG, ties by ascending index.
    pub ranking: Vec<usize>,
}

/// Compute [`ImportanceReport`] for a trained model on its training data.
pub fn importance_report(
    model: &RandomForestModel,
    data: &Dataset,
    perm_seed: u64,
) -> Result<ImportanceReport> {
    let mda = mean_decrease_accuracy(model, data, perm_seed)?;
    let mdg = mean_decrease_gini(model);
    Ok(build_report(mda, mdg))
}

fn percentages_or_zeros(imps: &[f64]) -> Vec<f64> {
    match percent_importance(imps) {
        Ok(p) => p,
        Err(_) => vec![0.0; imps.len()],
    }
}

fn build_report(mda: Vec<f64>, mdg: Vec<f64>) -> ImportanceReport {
    let clamped: Vec<f64> = mda.iter().map(|v| v.max(0.0)).collect();
    let percent_mda = percentages_or_zeros(&clamped);
    let percent_mdg = percentages_or_zeros(&mdg);
    let mut ranking: Vec<usize> = (0..mdg.len()).collect();
    ranking.sort_by(|&a, &b| mdg[b].partial_cmp(&mdg[a]).unwrap().then(a.cmp(&b)));
    ImportanceReport { mda, mdg, percent_mdg, percent_mda, ranking }
}

impl ImportanceReport {
    /// 1-based rank of `feature` in the MDG ordering.
    pub fn rank_of(&self, feature: usize) -> usize {
        self.ranking.iter().position(|&f| f == feature).unwrap() + 1
    }
}

/// Importance report as TSV: one row per feature in schema order, columns
/// feature, mda, mdg, percent_mdg, percent_mda, rank.
pub fn importance_tsv(report: &ImportanceReport, schema: &crate::dataset::FeatureSchema) -> String {
    let mut out = String::from("feature\tmda\tmdg\tpercent_mdg\tpercent_mda\trank\n");
    for f in 0..schema.n_features() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            schema.feature(f).name,
            report.mda[f],
            report.mdg[f],
            report.percent_mdg[f],
            report.percent_mda[f],
            report.rank_of(f)
        ));
    }
    out
}

/// Parse the TSV form back into a report (inverse of [`importance_tsv`]).
pub fn parse_importance_tsv(text: &str) -> Result<ImportanceReport> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema("empty importance TSV".into()))?;
    if header != "feature\tmda\tmdg\tpercent_mdg\tpercent_mda\trank" {
        return Err(Error::Schema(format!("unexpected importance TSV header {header:?}")));
    }
    let mut mda = Vec::new();
    let mut mdg = Vec::new();
    let mut percent_mdg = Vec::new();
    let mut percent_mda = Vec::new();
    let mut ranks = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(Error::Schema(format!(
                "importance TSV line {}: expected 6 columns, got {}",
                i + 2,
                cols.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Schema(format!("importance TSV line {}: bad number {s:?}", i + 2)))
        };
        mda.push(num(cols[1])?);
        mdg.push(num(cols[2])?);
        percent_mdg.push(num(cols[3])?);
        percent_mda.push(num(cols[4])?);
        let rank: usize = cols[5]
            .parse()
            .map_err(|_| Error::Schema(format!("importance TSV line {}: bad rank", i + 2)))?;
        ranks.push(rank);
    }
    if mda.is_empty() {
        return Err(Error::Schema("importance TSV has no feature rows".into()));
    }
    let mut ranking = vec![0usize; ranks.len()];
    for (f, &r) in ranks.iter().enumerate() {
        if r < 1 || r > ranks.len() {
            return Err(Error::Schema(format!("importance TSV rank {r} out of range")));
        }
        ranking[r - 1] = f;
    }
    Ok(ImportanceReport { mda, mdg, percent_mdg, percent_mda, ranking })
}

/// Two-panel SVG dot plot of the report, one panel per measure, features
/// ordered top-to-bottom by that panel's descending values.
pub fn importance_svg(report: &ImportanceReport, schema: &crate::dataset::FeatureSchema) -> String {
    let p = schema.n_features();
    let panel_w = 280.0;
    let panel_h = 40.0 + p as f64 * 26.0;
    let width = panel_w * 2.0 + 60.0;
    let height = panel_h + 30.0;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"12\">\n"
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let panels: [(&str, &Vec<f64>, f64); 2] =
        [("MeanDecreaseAccuracy", &report.mda, 20.0), ("MeanDecreaseGini", &report.mdg, panel_w + 60.0)];
    for (title, values, x0) in panels {
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
        let max = values.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"16\" text-anchor=\"middle\">{title}</text>\n",
            x0 + panel_w / 2.0
        ));
        let plot_x = x0 + 50.0;
        let plot_w = panel_w - 60.0;
        for (row, &f) in order.iter().enumerate() {
            let y = 40.0 + row as f64 * 26.0;
            let v = values[f].max(0.0);
            let cx = plot_x + v / max * plot_w;
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
                plot_x - 8.0,
                y + 4.0,
                schema.feature(f).name
            ));
            svg.push_str(&format!(
                "<line x1=\"{plot_x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ccc\" stroke-dasharray=\"2,3\"/>\n",
                plot_x + plot_w
            ));
            svg.push_str(&format!("<circle cx=\"{cx}\" cy=\"{y}\" r=\"4\" fill=\"black\"/>\n"));
        }
        let axis_y = 40.0 + p as f64 * 26.0;
        svg.push_str(&format!(
            "<line x1=\"{plot_x}\" y1=\"{axis_y}\" x2=\"{}\" y2=\"{axis_y}\" stroke=\"black\"/>\n",
            plot_x + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{plot_x}\" y=\"{}\" text-anchor=\"middle\">0</text>\n",
            axis_y + 16.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{max:.4}</text>\n",
            plot_x + plot_w,
            axis_y + 16.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
