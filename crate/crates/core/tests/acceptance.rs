//! Acceptance suite: one test per release criterion, each checked against
//! an oracle implemented here from first principles (brute-force search,
//! pair counting, hand-enumerated truth tables) rather than against the
//! library's own internals.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use recruitrf::cart::{best_split, Mtry};
use recruitrf::dataset::{
    generate_synthetic, Dataset, Feature, FeatureSchema, GroundTruth, SynthSpec,
};
use recruitrf::forest::{
    bootstrap_sample, predict_forest, serialize_model, train_forest, train_forest_serial,
    ForestParams,
};
use recruitrf::importance::{importance_report, percent_importance, prune_features};
use recruitrf::metrics::{class_rates, confusion_matrix, cross_validate, evaluation_text, roc_auc};
use recruitrf::selection::{figure3_tree, parse_rules, rules_text, screen_candidate, Verdict};

fn pass(n: usize, what: &str) {
    println!("criterion {n} ({what}): pass");
}

// Feature indices in the default candidate schema.
const PS: usize = 0;
const RAS: usize = 1;
const DSK: usize = 2;
const TE: usize = 3;
const GPA: usize = 4;
const CS: usize = 5;

const GOOD: usize = 0;
const AVERAGE: usize = 1;
const POOR: usize = 2;

/// Small random categorical dataset: up to 6 rows, up to 3 ternary
/// features, 3 target classes.
fn random_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let n_features = rng.gen_range(1..=3);
    let n_rows = rng.gen_range(1..=6);
    let features = (0..n_features)
        .map(|f| Feature {
            name: format!("F{f}"),
            levels: vec!["a".into(), "b".into(), "c".into()],
        })
        .collect();
    let schema = FeatureSchema::new(
        features,
        vec!["x".into(), "y".into(), "z".into()],
    )
    .unwrap();
    let rows = (0..n_rows)
        .map(|_| (0..n_features).map(|_| rng.gen_range(0..3)).collect())
        .collect();
    let targets = (0..n_rows).map(|_| rng.gen_range(0..3)).collect();
    Dataset::new(schema, rows, targets).unwrap()
}

fn oracle_gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    1.0 - counts.iter().map(|&c| (c as f64 / n as f64).powi(2)).sum::<f64>()
}

/// Brute force over every canonical split (left set contains level 0,
/// proper and nonempty) of every feature; minimal weighted child impurity,
/// or None when no split produces two nonempty children.
fn oracle_best_impurity(data: &Dataset) -> Option<f64> {
    let schema = data.schema();
    let n = data.n_rows();
    let mut best: Option<f64> = None;
    for f in 0..schema.n_features() {
        let m = schema.feature(f).levels.len();
        for mask in 0..(1u32 << m) {
            if mask & 1 == 0 || mask == (1 << m) - 1 {
                continue;
            }
            let mut left = vec![0usize; 3];
            let mut right = vec![0usize; 3];
            for i in 0..n {
                if mask >> data.row(i)[f] & 1 == 1 {
                    left[data.target(i)] += 1;
                } else {
                    right[data.target(i)] += 1;
                }
            }
            let (nl, nr): (usize, usize) = (left.iter().sum(), right.iter().sum());
            if nl == 0 || nr == 0 {
                continue;
            }
            let weighted = (nl as f64 * oracle_gini(&left)
                + nr as f64 * oracle_gini(&right))
                / n as f64;
            if best.is_none_or(|b| weighted < b) {
                best = Some(weighted);
            }
        }
    }
    best
}

#[test]
fn acceptance_1_split_search_matches_brute_force() {
    for i in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let data = random_dataset(&mut rng);
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        let candidates: Vec<usize> = (0..data.schema().n_features()).collect();
        let found = best_split(&data, &rows, &candidates).unwrap();
        let mut parent = vec![0usize; 3];
        for i in 0..data.n_rows() {
            parent[data.target(i)] += 1;
        }
        let parent_impurity = oracle_gini(&parent);
        match (found, oracle_best_impurity(&data)) {
            (Some(split), Some(oracle)) => {
                assert!(
                    (split.weighted_impurity - oracle).abs() <= 1e-12,
                    "instance {i}: {} vs oracle {oracle}",
                    split.weighted_impurity
                );
            }
            (None, oracle) => {
                // No split returned: the oracle must agree nothing
                // strictly improves on the parent.
                if let Some(o) = oracle {
                    assert!(
                        o >= parent_impurity - 1e-12,
                        "instance {i}: oracle found improvement {o} < {parent_impurity}"
                    );
                }
            }
            (Some(split), None) => {
                panic!(
                    "instance {i}: split {:?} found where oracle sees no valid split",
                    split.spec
                );
            }
        }
    }
    pass(1, "split search equals brute force on 200 random datasets");
}

#[test]
fn acceptance_2_bootstrap_unique_fraction_is_632() {
    let n = 250usize;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut total = 0.0;
    let reps = 2000;
    for _ in 0..reps {
        let (_, oob) = bootstrap_sample(n, &mut rng).unwrap();
        total += (n - oob.len()) as f64 / n as f64;
    }
    let mean = total / reps as f64;
    assert!((0.612..=0.652).contains(&mean), "mean unique fraction {mean}");
    pass(2, "mean bootstrap unique fraction in [0.612, 0.652]");
}

#[test]
fn acceptance_3_importance_separates_signal_from_noise() {
    let data = generate_synthetic(&SynthSpec::new(600, 0.1, 42).unwrap()).unwrap();
    let params = ForestParams { n_trees: 500, ..ForestParams::default() };
    let model = train_forest(&data, &params).unwrap();
    let oob = recruitrf::forest::oob_error(&model, &data).unwrap();
    assert!(
        1.0 - oob.error_rate >= 0.85,
        "OOB accuracy {} below 0.85",
        1.0 - oob.error_rate
    );
    let report = importance_report(&model, &data, params.seed).unwrap();
    let signal = [DSK, RAS, PS];
    let noise = [CS, TE, GPA];
    let min_signal = signal.iter().map(|&f| report.mda[f]).fold(f64::INFINITY, f64::min);
    let max_noise = noise.iter().map(|&f| report.mda[f]).fold(f64::NEG_INFINITY, f64::max);
    assert!(
        min_signal > max_noise,
        "weakest signal MDA {min_signal} not above strongest noise MDA {max_noise}"
    );
    for f in noise {
        assert!(
            report.mda[f].abs() <= 0.02,
            "noise feature {f} has |MDA| {} > 0.02",
            report.mda[f].abs()
        );
    }
    let mut top3: Vec<usize> = report.ranking[..3].to_vec();
    top3.sort_unstable();
    assert_eq!(top3, vec![PS, RAS, DSK], "MDG top three are not the signal features");
    pass(3, "500-tree forest recovers signal/noise importance structure");
}

/// Probability a random positive outscores a random negative, ties half.
fn pair_count_auc(scores: &[f64], truth: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (sp, &tp) in scores.iter().zip(truth) {
        if !tp {
            continue;
        }
        for (sn, &tn) in scores.iter().zip(truth) {
            if tn {
                continue;
            }
            pairs += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

#[test]
fn acceptance_4_metric_fixtures_are_exact() {
    // TP=3, FN=1, FP=1, TN=7 with class 0 as the positive class.
    let truth = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1];
    let pred = [0, 0, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1];
    let cm = confusion_matrix(&truth, &pred, 2).unwrap();
    let (tpr, fpr) = class_rates(&cm, 0).unwrap();
    assert_eq!(tpr, Some(0.75));
    assert_eq!(fpr, Some(0.125));

    let perfect = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
    assert_eq!(perfect, 1.0);
    let uninformative = roc_auc(&[0.5; 4], &[true, true, false, false]).unwrap();
    assert_eq!(uninformative, 0.5);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    for i in 0..100 {
        let n = rng.gen_range(2..=20);
        let scores: Vec<f64> = (0..n).map(|_| *grid.choose(&mut rng).unwrap()).collect();
        let mut truth: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        truth[0] = true;
        truth[n - 1] = false;
        let got = roc_auc(&scores, &truth).unwrap();
        let want = pair_count_auc(&scores, &truth);
        assert!((got - want).abs() <= 1e-12, "instance {i}: {got} vs {want}");
    }
    pass(4, "confusion rates and AUC match hand values and pair counting");
}

#[test]
fn acceptance_5_pruning_thresholds_cut_the_worked_example() {
    // Worked example: Gini importances listed as (DSK, RAS, PS, CS, TE, GPA).
    // Note the CS/GPA tie resolves by position, so the listing order matters.
    let mdg = [14.0, 5.0, 4.0, 2.0, 1.0, 2.0];
    let (dsk, cs, te, gpa) = (0usize, 3usize, 4usize, 5usize);
    let percents = percent_importance(&mdg).unwrap();
    assert_eq!(percents[dsk], 50.0);
    assert!((percents.iter().sum::<f64>() - 100.0).abs() <= 1e-9);

    let at_10 = prune_features(&percents, 10.0).unwrap();
    assert_eq!(at_10.pruned, vec![cs, te], "P=10 prunes TE and CS");
    assert_eq!(at_10.tie_groups, vec![vec![cs, gpa]], "CS and GPA straddle the cut");

    let at_15 = prune_features(&percents, 15.0).unwrap();
    assert_eq!(at_15.pruned, vec![cs, te, gpa]);
    pass(5, "percentage pruning reproduces the worked example");
}

/// The screening procedure as a flat truth table.
fn hand_verdict(dsk: usize, ras: usize, ps: usize, cs: usize) -> Verdict {
    let accept = match dsk {
        GOOD => ras != POOR || ps == GOOD,
        AVERAGE => match ras {
            GOOD => true,
            AVERAGE => ps == GOOD && cs == GOOD,
            _ => false,
        },
        _ => false,
    };
    if accept {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

#[test]
fn acceptance_6_builtin_tree_matches_hand_enumeration() {
    let tree = figure3_tree();
    let mut accepts = 0;
    for dsk in 0..3 {
        for ras in 0..3 {
            for ps in 0..3 {
                for cs in 0..3 {
                    let mut record = vec![0; 6];
                    record[PS] = ps;
                    record[RAS] = ras;
                    record[DSK] = dsk;
                    record[CS] = cs;
                    let decision = screen_candidate(&tree, &record).unwrap();
                    assert_eq!(
                        decision.verdict,
                        hand_verdict(dsk, ras, ps, cs),
                        "combination dsk={dsk} ras={ras} ps={ps} cs={cs}"
                    );
                    if decision.verdict == Verdict::Accept {
                        accepts += 1;
                    }
                }
            }
        }
    }
    assert_eq!(accepts, 31);

    let schema = FeatureSchema::candidate_default();
    let round_tripped = parse_rules(&rules_text(&tree, &schema), &schema).unwrap();
    assert_eq!(round_tripped, tree);
    pass(6, "81-combination truth table and rules round-trip hold");
}

#[test]
fn acceptance_7_training_is_deterministic_and_prefix_stable() {
    let data = generate_synthetic(&SynthSpec::new(200, 0.1, 3).unwrap()).unwrap();
    let params = ForestParams { n_trees: 50, ..ForestParams::default() };
    let a = train_forest(&data, &params).unwrap();
    let b = train_forest(&data, &params).unwrap();
    assert_eq!(serialize_model(&a), serialize_model(&b), "repeat training differs");

    let grown = train_forest(
        &data,
        &ForestParams { n_trees: 51, ..params },
    )
    .unwrap();
    assert_eq!(grown.trees[..50], a.trees[..], "extra tree perturbed earlier trees");
    assert_eq!(grown.inbag[..50], a.inbag[..]);

    let serial = train_forest_serial(&data, &params).unwrap();
    assert_eq!(serialize_model(&serial), serialize_model(&a), "serial differs from parallel");
    pass(7, "byte-identical retraining, stable prefixes, serial == parallel");
}

#[test]
fn acceptance_8_vote_variance_shrinks_with_ensemble_size() {
    let data = generate_synthetic(&SynthSpec::new(600, 0.1, 42).unwrap()).unwrap();
    let probe = vec![AVERAGE, AVERAGE, AVERAGE, 0, 0, 0];
    let variance_at = |n_trees: usize| {
        let fractions: Vec<f64> = (0..20u64)
            .map(|seed| {
                let params = ForestParams { n_trees, seed, ..ForestParams::default() };
                let model = train_forest(&data, &params).unwrap();
                predict_forest(&model, &probe).unwrap().vote_fractions[GOOD]
            })
            .collect();
        let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
        fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (fractions.len() - 1) as f64
    };
    let small = variance_at(10);
    let large = variance_at(200);
    assert!(
        small >= 5.0 * large,
        "variance {small} at 10 trees vs {large} at 200 trees: shrink factor below 5"
    );
    pass(8, "cross-seed vote variance shrinks at least 5x from 10 to 200 trees");
}

/// Separable data where every (DSK, RAS, PS) combination appears several
/// times, so each cross-validation training split still covers all of them.
fn covered_separable_data(copies: usize) -> Dataset {
    let schema = FeatureSchema::candidate_default();
    let truth = GroundTruth::screening_logic();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for dsk in 0..3 {
        for ras in 0..3 {
            for ps in 0..3 {
                for _ in 0..copies {
                    let mut row = vec![0; 6];
                    row[PS] = ps;
                    row[RAS] = ras;
                    row[DSK] = dsk;
                    rows.push(row);
                    targets.push(truth.target(dsk, ras, ps));
                }
            }
        }
    }
    Dataset::new(schema, rows, targets).unwrap()
}

#[test]
fn acceptance_9_stratified_cv_is_exhaustive_and_perfect_when_separable() {
    let data = covered_separable_data(5);
    let params = ForestParams {
        n_trees: 60,
        mtry: Mtry::Fixed(6),
        ..ForestParams::default()
    };
    let report = cross_validate(&data, &params, 10, 0).unwrap();
    assert_eq!(report.predictions.len(), data.n_rows(), "a row was never held out");
    assert_eq!(report.pooled.total(), data.n_rows() as u64, "a row was counted twice");
    assert_eq!(report.pooled.accuracy(), 1.0);
    assert_eq!(report.per_class.len(), 3);
    for (c, metrics) in report.per_class.iter().enumerate() {
        assert_eq!(metrics.auc, Some(1.0), "class {c} AUC");
    }
    assert_eq!(report.mean_auc, Some(1.0));

    let text = evaluation_text(&report, data.schema());
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    for column in ["CLASS", "TP RATE", "FP RATE", "AUC"] {
        assert!(header.contains(column), "missing column {column} in {header:?}");
    }
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 4, "three class rows plus the mean footer");
    for class in ["Good", "Average", "Poor"] {
        assert!(body.iter().any(|l| l.starts_with(class)), "no row for {class}");
    }
    assert!(body[3].starts_with("Mean AUC"));
    pass(9, "10-fold CV covers every row once and is exact on separable data");
}
