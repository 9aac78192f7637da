//! Accept/reject selection trees over candidate attributes.
//!
//! A selection tree tests features in descending importance order, each
//! test branching on disjoint level sets that together cover the feature
//! (every candidate is routable). Trees come from two places: the built-in
//! screening procedure in [`figure3_tree`], and [`derive_selection_tree`],
//! which generalizes it from a trained forest after pruning.

use crate::dataset::FeatureSchema;
use crate::error::Error;
use crate::forest::{predict_forest, RandomForestModel};
use crate::importance::{ImportanceReport, PruneResult};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accept => "ACCEPT",
            Verdict::Reject => "REJECT",
        }
    }
}

/// Multiway rule tree: a leaf verdict, or a feature test whose branches
/// pair a sorted level set with a subtree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectionTree {
    Verdict(Verdict),
    Test {
        feature: usize,
        branches: Vec<(Vec<usize>, SelectionTree)>,
    },
}

/// One step of a screening descent: the tested feature, the candidate's
/// level, and the branch set it matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStep {
    pub feature: usize,
    pub level: usize,
    pub matched: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScreeningDecision {
    pub verdict: Verdict,
    pub path: Vec<PathStep>,
}

/// Leaf-labeling policy for derived trees: which predicted classes count
/// as Accept, and how deep tests may stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptPolicy {
    pub accept_classes: Vec<usize>,
    /// `None` = unlimited.
    pub max_depth: Option<usize>,
}

impl AcceptPolicy {
    fn validate(&self, n_classes: usize) -> Result<()> {
        if self.accept_classes.is_empty() {
            return Err(Error::Parameter("accept_classes must be nonempty".into()));
        }
        if self.accept_classes.len() >= n_classes {
            return Err(Error::Parameter(
                "accept_classes must be a proper subset of the target classes".into(),
            ));
        }
        if let Some(&bad) = self.accept_classes.iter().find(|&&c| c >= n_classes) {
            return Err(Error::Parameter(format!("accept class {bad} out of range")));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Parameter("max_depth must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for AcceptPolicy {
    /// Accept Good and Average candidates, unlimited depth.
    fn default() -> Self {
        AcceptPolicy { accept_classes: vec![0, 1], max_depth: None }
    }
}

/// The built-in hand-authored screening tree over the default candidate
/// schema: strong domain skill admits all but weak analytical scores,
/// average domain skill demands increasingly more, and weak domain skill
/// rejects outright.
pub fn figure3_tree() -> SelectionTree {
    use SelectionTree::{Test, Verdict as V};
    use Verdict::{Accept, Reject};
    // Default schema indices: PS 0, RAS 1, DSK 2, CS 5; levels
    // Good 0, Average 1, Poor 2.
    let ps_gate = |accept_on_good: SelectionTree| Test {
        feature: 0,
        branches: vec![(vec![0], accept_on_good), (vec![1, 2], V(Reject))],
    };
    Test {
        feature: 2,
        branches: vec![
            (
                vec![0],
                Test {
                    feature: 1,
                    branches: vec![
                        (vec![0, 1], V(Accept)),
                        (vec![2], ps_gate(V(Accept))),
                    ],
                },
            ),
            (
                vec![1],
                Test {
                    feature: 1,
                    branches: vec![
                        (vec![0], V(Accept)),
                        (
                            vec![1],
                            ps_gate(Test {
                                feature: 5,
                                branches: vec![(vec![0], V(Accept)), (vec![1, 2], V(Reject))],
                            }),
                        ),
                        (vec![2], V(Reject)),
                    ],
                },
            ),
            (vec![2], V(Reject)),
        ],
    }
}

/// The built-in tree in rules-text form, byte-equal to
/// `rules_text(&figure3_tree(), &FeatureSchema::candidate_default())`.
pub const FIG3_RULES: &str = include_str!("../resources/fig3.rules");

/// Route a record through a tree, returning the verdict and the branch
/// path taken.
pub fn screen_candidate(tree: &SelectionTree, record: &[usize]) -> Result<ScreeningDecision> {
    let mut node = tree;
    let mut path = Vec::new();
    loop {
        match node {
            SelectionTree::Verdict(v) => {
                return Ok(ScreeningDecision { verdict: *v, path });
            }
            SelectionTree::Test { feature, branches } => {
                let level = *record.get(*feature).ok_or_else(|| {
                    Error::Schema(format!(
                        "record has {} values but the tree tests feature {feature}",
                        record.len()
                    ))
                })?;
                let branch = branches.iter().find(|(levels, _)| levels.contains(&level));
                let Some((levels, child)) = branch else {
                    return Err(Error::MalformedTree(format!(
                        "no branch of the feature-{feature} test covers level {level}"
                    )));
                };
                path.push(PathStep { feature: *feature, level, matched: levels.clone() });
                node = child;
            }
        }
    }
}

/// Structural checks: per test, branch sets must be nonempty, sorted,
/// disjoint, and total over the feature's levels; no feature may repeat
/// along a path.
pub fn validate_selection_tree(tree: &SelectionTree, schema: &FeatureSchema) -> Result<()> {
    fn walk(
        node: &SelectionTree,
        schema: &FeatureSchema,
        path: &mut Vec<usize>,
    ) -> Result<()> {
        let SelectionTree::Test { feature, branches } = node else {
            return Ok(());
        };
        if *feature >= schema.n_features() {
            return Err(Error::MalformedTree(format!("feature {feature} out of range")));
        }
        if path.contains(feature) {
            return Err(Error::MalformedTree(format!(
                "feature {:?} tested twice on one path",
                schema.feature(*feature).name
            )));
        }
        let m = schema.n_levels(*feature);
        let mut covered = vec![false; m];
        for (levels, _) in branches {
            if levels.is_empty() {
                return Err(Error::MalformedTree("empty branch level set".into()));
            }
            if !levels.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::MalformedTree("branch level set not strictly ascending".into()));
            }
            for &l in levels {
                if l >= m {
                    return Err(Error::MalformedTree(format!(
                        "level {l} out of range for feature {:?}",
                        schema.feature(*feature).name
                    )));
                }
                if covered[l] {
                    return Err(Error::MalformedTree(format!(
                        "level {:?} of feature {:?} covered by two branches",
                        schema.feature(*feature).levels[l],
                        schema.feature(*feature).name
                    )));
                }
                covered[l] = true;
            }
        }
        if let Some(l) = covered.iter().position(|&c| !c) {
            return Err(Error::MalformedTree(format!(
                "branches of feature {:?} do not cover level {:?}",
                schema.feature(*feature).name,
                schema.feature(*feature).levels[l]
            )));
        }
        path.push(*feature);
        for (_, child) in branches {
            walk(child, schema, path)?;
        }
        path.pop();
        Ok(())
    }
    walk(tree, schema, &mut Vec::new())
}

/// Merge structurally identical sibling subtrees into shared level sets
/// and collapse tests whose branches all agree. Idempotent.
fn normalize(node: SelectionTree) -> SelectionTree {
    let SelectionTree::Test { feature, branches } = node else {
        return node;
    };
    let normalized: Vec<(Vec<usize>, SelectionTree)> = branches
        .into_iter()
        .map(|(levels, child)| (levels, normalize(child)))
        .collect();
    let mut merged: Vec<(Vec<usize>, SelectionTree)> = Vec::new();
    for (levels, child) in normalized {
        match merged.iter_mut().find(|(_, existing)| *existing == child) {
            Some((existing_levels, _)) => {
                existing_levels.extend(levels);
                existing_levels.sort_unstable();
            }
            None => merged.push((levels, child)),
        }
    }
    merged.sort_by_key(|(levels, _)| levels[0]);
    if merged.len() == 1 {
        return merged.into_iter().next().unwrap().1;
    }
    SelectionTree::Test { feature, branches: merged }
}

/// Generalize the built-in procedure from a trained forest: test the kept
/// features in descending MDG order, label leaves by the majority
/// forest-predicted class of the training rows that reach them (mapped
/// through `policy.accept_classes`; ties and inherited-empty nodes fall
/// back conservatively to Reject and the parent verdict respectively),
/// then merge identical sibling subtrees.
pub fn derive_selection_tree(
    model: &RandomForestModel,
    data: &crate::dataset::Dataset,
    report: &ImportanceReport,
    prune: &PruneResult,
    policy: &AcceptPolicy,
) -> Result<SelectionTree> {
    let schema = data.schema();
    policy.validate(schema.n_classes())?;
    if prune.kept.is_empty() {
        return Err(Error::PruningSafeguard);
    }
    let p = schema.n_features();
    if report.ranking.len() != p || prune.kept.len() + prune.pruned.len() != p {
        return Err(Error::Consistency(
            "importance report and prune result must cover every schema feature".into(),
        ));
    }
    if model.schema != *schema {
        return Err(Error::Consistency("model schema differs from dataset schema".into()));
    }

    // Kept features in descending-MDG order.
    let ranked_kept: Vec<usize> = report
        .ranking
        .iter()
        .copied()
        .filter(|f| prune.kept.contains(f))
        .collect();

    let predicted: Vec<usize> = (0..data.n_rows())
        .map(|r| predict_forest(model, data.row(r)).map(|v| v.predicted))
        .collect::<Result<_>>()?;

    struct BuildCtx<'a> {
        data: &'a crate::dataset::Dataset,
        policy: &'a AcceptPolicy,
        predicted: &'a [usize],
    }

    impl BuildCtx<'_> {
        fn accepts(&self, class: usize) -> bool {
            self.policy.accept_classes.contains(&class)
        }

        /// Majority predicted class of `rows`; `None` on a tie.
        fn majority(&self, rows: &[usize]) -> Option<usize> {
            let mut counts = vec![0usize; self.data.schema().n_classes()];
            for &r in rows {
                counts[self.predicted[r]] += 1;
            }
            let best = *counts.iter().max().unwrap();
            let mut winners = counts.iter().enumerate().filter(|(_, &c)| c == best);
            let (class, _) = winners.next().unwrap();
            winners.next().is_none().then_some(class)
        }

        fn build(
            &self,
            rows: Vec<usize>,
            depth: usize,
            ranked_kept: &[usize],
            parent_verdict: Verdict,
        ) -> SelectionTree {
            if rows.is_empty() {
                return SelectionTree::Verdict(parent_verdict);
            }
            let verdict_here = match self.majority(&rows) {
                Some(class) if self.accepts(class) => Verdict::Accept,
                _ => Verdict::Reject,
            };
            let pure = rows
                .iter()
                .map(|&r| self.accepts(self.predicted[r]))
                .all(|a| a == self.accepts(self.predicted[rows[0]]));
            let depth_reached = self.policy.max_depth.is_some_and(|d| depth >= d);
            let Some((&feature, rest)) = ranked_kept.split_first() else {
                return SelectionTree::Verdict(verdict_here);
            };
            if pure || depth_reached {
                return SelectionTree::Verdict(verdict_here);
            }
            let m = self.data.schema().n_levels(feature);
            let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); m];
            for &r in &rows {
                by_level[self.data.row(r)[feature]].push(r);
            }
            let branches = by_level
                .into_iter()
                .enumerate()
                .map(|(level, child_rows)| {
                    let child = self.build(child_rows, depth + 1, rest, verdict_here);
                    (vec![level], child)
                })
                .collect();
            SelectionTree::Test { feature, branches }
        }
    }

    let ctx = BuildCtx { data, policy, predicted: &predicted };
    let all_rows: Vec<usize> = (0..data.n_rows()).collect();
    let raw = ctx.build(all_rows, 0, &ranked_kept, Verdict::Reject);
    Ok(normalize(raw))
}

fn level_set_text(levels: &[usize], feature: usize, schema: &FeatureSchema) -> String {
    let names: Vec<&str> = levels
        .iter()
        .map(|&l| schema.feature(feature).levels[l].as_str())
        .collect();
    if names.len() == 1 {
        format!("== {}", names[0])
    } else {
        format!("in {{{}}}", names.join(", "))
    }
}

/// Serialize a tree in the rules grammar: one branch per line, two-space
/// indentation per depth, `FEATURE == LEVEL` / `FEATURE in {L1, L2}`
/// tests, and `: ACCEPT` / `: REJECT` suffixes closing branches. A tree
/// that is a bare verdict becomes a single `ACCEPT` or `REJECT` line.
pub fn rules_text(tree: &SelectionTree, schema: &FeatureSchema) -> String {
    fn emit(node: &SelectionTree, depth: usize, schema: &FeatureSchema, out: &mut String) {
        let SelectionTree::Test { feature, branches } = node else {
            unreachable!("verdicts are emitted on their parent's line");
        };
        for (levels, child) in branches {
            let indent = "  ".repeat(depth);
            let test = level_set_text(levels, *feature, schema);
            let name = &schema.feature(*feature).name;
            match child {
                SelectionTree::Verdict(v) => {
                    out.push_str(&format!("{indent}{name} {test}: {}\n", v.as_str()));
                }
                t @ SelectionTree::Test { .. } => {
                    out.push_str(&format!("{indent}{name} {test}\n"));
                    emit(t, depth + 1, schema, out);
                }
            }
        }
    }
    match tree {
        SelectionTree::Verdict(v) => format!("{}\n", v.as_str()),
        t @ SelectionTree::Test { .. } => {
            let mut out = String::new();
            emit(t, 0, schema, &mut out);
            out
        }
    }
}

struct RuleLine {
    number: usize,
    depth: usize,
    feature: usize,
    levels: Vec<usize>,
    verdict: Option<Verdict>,
}

fn parse_verdict(text: &str, line: usize) -> Result<Verdict> {
    match text.trim().to_ascii_uppercase().as_str() {
        "ACCEPT" => Ok(Verdict::Accept),
        "REJECT" => Ok(Verdict::Reject),
        other => Err(Error::Rules { line, msg: format!("unknown verdict {other:?}") }),
    }
}

fn parse_rule_line(number: usize, depth: usize, body: &str, schema: &FeatureSchema) -> Result<RuleLine> {
    let (test, verdict) = match body.split_once(':') {
        Some((test, v)) => (test.trim(), Some(parse_verdict(v, number)?)),
        None => (body.trim(), None),
    };
    let err = |msg: String| Error::Rules { line: number, msg };

    let (name, rest) = test
        .split_once(char::is_whitespace)
        .ok_or_else(|| err(format!("expected `FEATURE == LEVEL` or `FEATURE in {{...}}`, got {test:?}")))?;
    let feature = schema
        .feature_index(name)
        .ok_or_else(|| err(format!("unknown feature {name:?}")))?;
    let rest = rest.trim();

    let level_names: Vec<String> = if let Some(level) = rest.strip_prefix("==") {
        vec![level.trim().to_string()]
    } else if let Some(set) = rest.strip_prefix("in") {
        let set = set.trim();
        let inner = set
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(|| err(format!("expected `in {{L1, L2}}`, got {set:?}")))?;
        inner.split(',').map(|s| s.trim().to_string()).collect()
    } else {
        return Err(err(format!("expected `==` or `in` after feature name, got {rest:?}")));
    };

    let mut levels = Vec::new();
    for level_name in &level_names {
        let level = schema
            .level_index(feature, level_name)
            .ok_or_else(|| err(format!(
                "unknown level {level_name:?} for feature {:?}",
                schema.feature(feature).name
            )))?;
        if levels.contains(&level) {
            return Err(err(format!("level {level_name:?} listed twice")));
        }
        levels.push(level);
    }
    levels.sort_unstable();
    Ok(RuleLine { number, depth, feature, levels, verdict })
}

/// Parse rules text back into a tree, enforcing the structural invariants
/// (same feature across sibling branches, disjoint and total level sets,
/// no feature reuse along a path). Errors carry 1-based line numbers.
pub fn parse_rules(text: &str, schema: &FeatureSchema) -> Result<SelectionTree> {
    let mut lines = Vec::new();
    let mut bare_verdict: Option<(usize, Verdict)> = None;
    for (i, raw) in text.lines().enumerate() {
        let number = i + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let stripped = raw.trim_start_matches(' ');
        let spaces = raw.len() - stripped.len();
        if spaces % 2 != 0 {
            return Err(Error::Rules {
                line: number,
                msg: format!("indentation of {spaces} spaces is not a multiple of 2"),
            });
        }
        if raw.contains('\t') {
            return Err(Error::Rules { line: number, msg: "tabs are not allowed".into() });
        }
        let trimmed = stripped.trim_end();
        if spaces == 0 && matches!(trimmed.to_ascii_uppercase().as_str(), "ACCEPT" | "REJECT") {
            bare_verdict = Some((number, parse_verdict(trimmed, number)?));
            continue;
        }
        lines.push(parse_rule_line(number, spaces / 2, trimmed, schema)?);
    }

    if let Some((number, verdict)) = bare_verdict {
        if !lines.is_empty() {
            return Err(Error::Rules {
                line: number,
                msg: "a bare verdict line must be the only rule".into(),
            });
        }
        return Ok(SelectionTree::Verdict(verdict));
    }
    if lines.is_empty() {
        return Err(Error::Rules { line: 1, msg: "no rules found".into() });
    }
    if lines[0].depth != 0 {
        return Err(Error::Rules {
            line: lines[0].number,
            msg: "first rule must start at indentation 0".into(),
        });
    }

    let mut pos = 0usize;
    let tree = parse_block(&lines, &mut pos, 0, &mut Vec::new(), schema)?;
    if pos != lines.len() {
        return Err(Error::Rules {
            line: lines[pos].number,
            msg: "unreachable rule after the tree completed".into(),
        });
    }
    Ok(tree)
}

fn parse_block(
    lines: &[RuleLine],
    pos: &mut usize,
    depth: usize,
    path: &mut Vec<usize>,
    schema: &FeatureSchema,
) -> Result<SelectionTree> {
    let first = &lines[*pos];
    let feature = first.feature;
    if path.contains(&feature) {
        return Err(Error::Rules {
            line: first.number,
            msg: format!("feature {:?} already tested on this path", schema.feature(feature).name),
        });
    }
    let m = schema.n_levels(feature);
    let mut covered: Vec<Option<usize>> = vec![None; m];
    let mut branches = Vec::new();

    while *pos < lines.len() && lines[*pos].depth == depth {
        let line = &lines[*pos];
        if line.feature != feature {
            return Err(Error::Rules {
                line: line.number,
                msg: format!(
                    "sibling branches must test one feature; expected {:?}, got {:?}",
                    schema.feature(feature).name,
                    schema.feature(line.feature).name
                ),
            });
        }
        for &l in &line.levels {
            if let Some(previous) = covered[l] {
                return Err(Error::Rules {
                    line: line.number,
                    msg: format!(
                        "level {:?} already covered on line {previous}",
                        schema.feature(feature).levels[l]
                    ),
                });
            }
            covered[l] = Some(line.number);
        }
        let levels = line.levels.clone();
        let number = line.number;
        let verdict = line.verdict;
        *pos += 1;
        let child = match verdict {
            Some(v) => SelectionTree::Verdict(v),
            None => {
                if *pos >= lines.len() || lines[*pos].depth <= depth {
                    return Err(Error::Rules {
                        line: number,
                        msg: "branch has neither a verdict nor nested rules".into(),
                    });
                }
                if lines[*pos].depth != depth + 1 {
                    return Err(Error::Rules {
                        line: lines[*pos].number,
                        msg: format!(
                            "expected indentation depth {}, got {}",
                            depth + 1,
                            lines[*pos].depth
                        ),
                    });
                }
                path.push(feature);
                let subtree = parse_block(lines, pos, depth + 1, path, schema)?;
                path.pop();
                subtree
            }
        };
        branches.push((levels, child));
    }

    if let Some(l) = covered.iter().position(Option::is_none) {
        return Err(Error::Rules {
            line: first.number,
            msg: format!(
                "branches of {:?} do not cover level {:?}",
                schema.feature(feature).name,
                schema.feature(feature).levels[l]
            ),
        });
    }
    Ok(SelectionTree::Test { feature, branches })
}
