//! Classifier evaluation: confusion matrices, one-vs-rest TPR/FPR, ROC
//! AUC, and the stratified cross-validation harness.
//!
//! Rates with empty denominators are reported as explicitly undefined
//! (`None`), never silently coerced to 0 or 1.

use crate::dataset::{stratified_folds, Dataset, FeatureSchema};
use crate::error::Error;
use crate::forest::{predict_forest, train_forest, ForestParams, VoteResult};
use crate::rng::{derive_seed, DOMAIN_CV};
use crate::Result;

/// k-by-k count matrix; entry (i, j) counts rows of true class i predicted
/// as class j.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Correctly classified rows.
    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.counts[c][c]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// One-vs-rest cells for `class`: (tp, fn, fp, tn).
    pub fn one_vs_rest(&self, class: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[class][class];
        let fn_ = self.counts[class].iter().sum::<u64>() - tp;
        let fp = (0..self.n_classes())
            .filter(|&i| i != class)
            .map(|i| self.counts[i][class])
            .sum();
        let tn = self.total() - tp - fn_ - fp;
        (tp, fn_, fp, tn)
    }
}

/// Count true/predicted class pairs into a `n_classes`-square matrix.
pub fn confusion_matrix(
    truth: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Parameter(format!(
            "confusion_matrix: {} truth labels vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Parameter("confusion_matrix: no rows".into()));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::Parameter(format!(
                "confusion_matrix: class index out of range (truth {t}, predicted {p}, k {n_classes})"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// One-vs-rest TPR = TP/(TP+FN) and FPR = FP/(TN+FP) for one class.
///
/// An empty denominator yields `None` for that rate.
pub fn class_rates(cm: &ConfusionMatrix, class: usize) -> Result<(Option<f64>, Option<f64>)> {
    if class >= cm.n_classes() {
        return Err(Error::Parameter(format!("class_rates: class {class} out of range")));
    }
    let (tp, fn_, fp, tn) = cm.one_vs_rest(class);
    let tpr = if tp + fn_ == 0 { None } else { Some(tp as f64 / (tp + fn_) as f64) };
    let fpr = if tn + fp == 0 { None } else { Some(fp as f64 / (tn + fp) as f64) };
    Ok((tpr, fpr))
}

/// Area under the ROC curve, trapezoidal over all score thresholds.
///
/// Equals the probability that a random positive outscores a random
/// negative, counting ties half.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::Parameter(format!(
            "roc_auc: {} scores vs {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Parameter(format!("roc_auc: non-finite score {bad}")));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc(format!(
            "roc_auc needs both classes, got {pos} positive and {neg} negative rows"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    // Sweep thresholds from high to low; tied scores move as one block.
    let mut area = 0.0f64;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut dtp, mut dfp) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if truth[order[j]] {
                dtp += 1;
            } else {
                dfp += 1;
            }
            j += 1;
        }
        // Trapezoid between (fp, tp) and (fp+dfp, tp+dtp).
        area += dfp as f64 * (tp as f64 + tp as f64 + dtp as f64) / 2.0;
        tp += dtp;
        fp += dfp;
        i = j;
    }
    debug_assert_eq!((tp as usize, fp as usize), (pos, neg));
    Ok(area / (pos as f64 * neg as f64))
}

/// One class's row of the evaluation table. `None` marks rates whose
/// denominator was empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub auc: Option<f64>,
}

/// Pooled k-fold evaluation results.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub per_class: Vec<ClassMetrics>,
    pub pooled: ConfusionMatrix,
    /// Arithmetic mean over the defined per-class AUCs.
    pub mean_auc: Option<f64>,
    /// Held-out vote per row, in dataset row order.
    pub predictions: Vec<VoteResult>,
}

/// Stratified k-fold cross-validation of a forest configuration.
///
/// Each fold trains on the remaining folds with a seed derived from
/// (seed, fold) and predicts its held-out rows; every row is predicted
/// exactly once. Per-class TPR/FPR come from the pooled confusion matrix
/// and per-class one-vs-rest AUC from the pooled vote fractions.
pub fn cross_validate(
    data: &Dataset,
    params: &ForestParams,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    let folds = stratified_folds(data, k, seed)?;
    let n = data.n_rows();
    let n_classes = data.schema().n_classes();

    let mut predictions: Vec<Option<VoteResult>> = vec![None; n];
    for fold in 0..k {
        let train_rows = folds.train_rows(fold);
        let test_rows = folds.test_rows(fold);
        let mut present = vec![false; n_classes];
        for &r in &train_rows {
            present[data.target(r)] = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::Fold {
                fold,
                msg: "training part of this fold holds fewer than 2 classes".into(),
            });
        }
        let train_data = Dataset::new(
            data.schema().clone(),
            train_rows.iter().map(|&r| data.row(r).to_vec()).collect(),
            train_rows.iter().map(|&r| data.target(r)).collect(),
        )?;
        let fold_params =
            ForestParams { seed: derive_seed(seed, DOMAIN_CV, fold as u64), ..params.clone() };
        let model = train_forest(&train_data, &fold_params)
            .map_err(|e| Error::Fold { fold, msg: e.to_string() })?;
        for &r in &test_rows {
            let vote = predict_forest(&model, data.row(r))
                .map_err(|e| Error::Fold { fold, msg: e.to_string() })?;
            if predictions[r].replace(vote).is_some() {
                return Err(Error::Consistency(format!(
                    "row {r} predicted by more than one fold"
                )));
            }
        }
    }
    let predictions: Vec<VoteResult> = predictions
        .into_iter()
        .enumerate()
        .map(|(r, v)| {
            v.ok_or_else(|| Error::Consistency(format!("row {r} predicted by no fold")))
        })
        .collect::<Result<_>>()?;

    let predicted: Vec<usize> = predictions.iter().map(|v| v.predicted).collect();
    let pooled = confusion_matrix(data.targets(), &predicted, n_classes)?;

    let mut per_class = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let (tpr, fpr) = class_rates(&pooled, c)?;
        let scores: Vec<f64> = predictions.iter().map(|v| v.vote_fractions[c]).collect();
        let is_c: Vec<bool> = data.targets().iter().map(|&t| t == c).collect();
        let auc = match roc_auc(&scores, &is_c) {
            Ok(a) => Some(a),
            Err(Error::UndefinedAuc(_)) => None,
            Err(e) => return Err(e),
        };
        per_class.push(ClassMetrics { tpr, fpr, auc });
    }
    let defined: Vec<f64> = per_class.iter().filter_map(|m| m.auc).collect();
    let mean_auc = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };

    Ok(CvReport { per_class, pooled, mean_auc, predictions })
}

fn fmt_rate(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(x) => format!("{x:.precision$}"),
        None => "n/a".to_string(),
    }
}

/// Aligned text table: one row per class with TP rate, FP rate, and AUC,
/// plus a mean-AUC footer.
pub fn evaluation_text(report: &CvReport, schema: &FeatureSchema) -> String {
    let name_w = schema
        .target_levels()
        .iter()
        .map(String::len)
        .chain(["CLASS".len(), "Mean AUC".len()])
        .max()
        .unwrap();
    let mut out = format!("{:<name_w$}  {:>7}  {:>7}  {:>7}\n", "CLASS", "TP RATE", "FP RATE", "AUC");
    for (c, m) in report.per_class.iter().enumerate() {
        out.push_str(&format!(
            "{:<name_w$}  {:>7}  {:>7}  {:>7}\n",
            schema.target_levels()[c],
            fmt_rate(m.tpr, 3),
            fmt_rate(m.fpr, 3),
            fmt_rate(m.auc, 3),
        ));
    }
    out.push_str(&format!(
        "{:<name_w$}  {:>7}  {:>7}  {:>7}\n",
        "Mean AUC",
        "",
        "",
        fmt_rate(report.mean_auc, 3),
    ));
    out
}

/// TSV form of the evaluation table; full-precision numbers, `n/a` for
/// undefined rates, footer row labeled `mean`.
pub fn evaluation_tsv(report: &CvReport, schema: &FeatureSchema) -> String {
    let full = |v: Option<f64>| match v {
        Some(x) => format!("{x}"),
        None => "n/a".to_string(),
    };
    let mut out = String::from("class\ttp_rate\tfp_rate\tauc\n");
    for (c, m) in report.per_class.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            schema.target_levels()[c],
            full(m.tpr),
            full(m.fpr),
            full(m.auc)
        ));
    }
    out.push_str(&format!("mean\t\t\t{}\n", full(report.mean_auc)));
    out
}

/// Parse the TSV evaluation table back into its rows: per-class
/// (tpr, fpr, auc) plus the mean AUC.
pub fn parse_evaluation_tsv(text: &str) -> Result<(Vec<ClassMetrics>, Option<f64>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Schema("empty evaluation TSV".into()))?;
    if header != "class\ttp_rate\tfp_rate\tauc" {
        return Err(Error::Schema(format!("unexpected evaluation TSV header {header:?}")));
    }
    let parse_rate = |s: &str, line: usize| -> Result<Option<f64>> {
        if s == "n/a" {
            return Ok(None);
        }
        s.parse::<f64>()
            .map(Some)
            .map_err(|_| Error::Schema(format!("evaluation TSV line {line}: bad number {s:?}")))
    };
    let mut per_class = Vec::new();
    let mut mean_auc = None;
    let mut saw_footer = false;
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Schema(format!(
                "evaluation TSV line {}: expected 4 columns, got {}",
                i + 2,
                cols.len()
            )));
        }
        if cols[0] == "mean" {
            mean_auc = parse_rate(cols[3], i + 2)?;
            saw_footer = true;
            break;
        }
        per_class.push(ClassMetrics {
            tpr: parse_rate(cols[1], i + 2)?,
            fpr: parse_rate(cols[2], i + 2)?,
            auc: parse_rate(cols[3], i + 2)?,
        });
    }
    if !saw_footer {
        return Err(Error::Schema("evaluation TSV missing mean footer".into()));
    }
    if per_class.is_empty() {
        return Err(Error::Schema("evaluation TSV has no class rows".into()));
    }
    Ok((per_class, mean_auc))
}
