//! Candidate-attribute schema, CSV ingestion, fold assignment, and
//! synthetic data generation.
//!
//! The default schema covers six categorical screening attributes
//! (PS, RAS, DSK, TE, GPA, CS) and a three-level performance target P.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::{stream, DOMAIN_FOLDS, DOMAIN_SYNTH};
use crate::Result;

/// Name of the target column in CSV files.
pub const TARGET_COLUMN: &str = "P";

/// One categorical feature: a name and its ordered level names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub levels: Vec<String>,
}

/// Ordered feature set plus the target's level names.
///
/// Construction validates: unique nonempty feature names, at least two
/// levels per feature, unique level names within a feature, and at least
/// two target levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr")]
pub struct FeatureSchema {
    features: Vec<Feature>,
    target_levels: Vec<String>,
}

#[derive(Deserialize)]
struct SchemaRepr {
    features: Vec<Feature>,
    target_levels: Vec<String>,
}

impl TryFrom<SchemaRepr> for FeatureSchema {
    type Error = Error;
    fn try_from(raw: SchemaRepr) -> Result<Self> {
        FeatureSchema::new(raw.features, raw.target_levels)
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>, target_levels: Vec<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Schema("schema has no features".into()));
        }
        let mut seen = HashMap::new();
        for f in &features {
            if f.name.trim().is_empty() {
                return Err(Error::Schema("empty feature name".into()));
            }
            if seen.insert(f.name.to_ascii_lowercase(), ()).is_some() {
                return Err(Error::Schema(format!("duplicate feature name {:?}", f.name)));
            }
            if f.levels.len() < 2 {
                return Err(Error::Schema(format!(
                    "feature {:?} needs at least 2 levels",
                    f.name
                )));
            }
            let mut level_seen = HashMap::new();
            for l in &f.levels {
                if level_seen.insert(l.to_ascii_lowercase(), ()).is_some() {
                    return Err(Error::Schema(format!(
                        "feature {:?} has duplicate level {:?}",
                        f.name, l
                    )));
                }
            }
        }
        if target_levels.len() < 2 {
            return Err(Error::Schema("target needs at least 2 levels".into()));
        }
        let mut tseen = HashMap::new();
        for l in &target_levels {
            if tseen.insert(l.to_ascii_lowercase(), ()).is_some() {
                return Err(Error::Schema(format!("duplicate target level {:?}", l)));
            }
        }
        Ok(Self { features, target_levels })
    }

    /// The six-attribute candidate schema with a Good/Average/Poor target.
    pub fn candidate_default() -> Self {
        let gap = || vec!["Good".to_string(), "Average".to_string(), "Poor".to_string()];
        let features = vec![
            Feature { name: "PS".into(), levels: gap() },
            Feature { name: "RAS".into(), levels: gap() },
            Feature { name: "DSK".into(), levels: gap() },
            Feature { name: "TE".into(), levels: vec!["Good".into(), "Bad".into()] },
            Feature { name: "GPA".into(), levels: gap() },
            Feature { name: "CS".into(), levels: gap() },
        ];
        Self::new(features, gap()).expect("default schema is valid")
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &Feature {
        &self.features[index]
    }

    pub fn n_levels(&self, feature: usize) -> usize {
        self.features[feature].levels.len()
    }

    pub fn target_levels(&self) -> &[String] {
        &self.target_levels
    }

    pub fn n_classes(&self) -> usize {
        self.target_levels.len()
    }

    /// Look up a feature by name, case-insensitively.
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features
            .iter()
            .position(|f| f.name.eq_ignore_ascii_case(name))
    }

    /// Look up a level of `feature` by name, case-insensitively.
    pub fn level_index(&self, feature: usize, name: &str) -> Option<usize> {
        self.features[feature]
            .levels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(name))
    }

    /// Look up a target level by name, case-insensitively.
    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.target_levels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(name))
    }

    /// Check that `record` has one valid level index per feature.
    pub fn validate_record(&self, record: &[usize]) -> Result<()> {
        if record.len() != self.n_features() {
            return Err(Error::Schema(format!(
                "record has {} values, schema has {} features",
                record.len(),
                self.n_features()
            )));
        }
        for (f, &level) in record.iter().enumerate() {
            if level >= self.n_levels(f) {
                return Err(Error::Schema(format!(
                    "level index {} out of range for feature {}",
                    level, self.features[f].name
                )));
            }
        }
        Ok(())
    }
}

/// Categorization band for a raw assessment score.
///
/// Ordered `Poor < Average < Good` so that banding is monotone in the raw
/// score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ScoreBand {
    Poor,
    Average,
    Good,
}

impl ScoreBand {
    /// Level index in a Good/Average/Poor level list.
    pub fn level_index(self) -> usize {
        match self {
            ScoreBand::Good => 0,
            ScoreBand::Average => 1,
            ScoreBand::Poor => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreBand::Good => "Good",
            ScoreBand::Average => "Average",
            ScoreBand::Poor => "Poor",
        }
    }
}

impl fmt::Display for ScoreBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Band a raw percentage score: above 75 is Good, 50 through 75 inclusive
/// is Average, below 50 is Poor.
pub fn categorize_score(raw: f64) -> Result<ScoreBand> {
    if !(0.0..=100.0).contains(&raw) {
        return Err(Error::OutOfRange { value: raw, min: 0.0, max: 100.0 });
    }
    Ok(if raw > 75.0 {
        ScoreBand::Good
    } else if raw >= 50.0 {
        ScoreBand::Average
    } else {
        ScoreBand::Poor
    })
}

/// A validated table of categorical records with target labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Vec<Vec<usize>>,
    targets: Vec<usize>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<Vec<usize>>, targets: Vec<usize>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::Parameter(format!(
                "{} rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        for row in &rows {
            schema.validate_record(row)?;
        }
        for &t in &targets {
            if t >= schema.n_classes() {
                return Err(Error::Schema(format!("target index {} out of range", t)));
            }
        }
        Ok(Self { schema, rows, targets })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn target(&self, i: usize) -> usize {
        self.targets[i]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Per-class row counts over the whole table.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.schema.n_classes()];
        for &t in &self.targets {
            counts[t] += 1;
        }
        counts
    }

    /// Serialize to CSV in schema column order, target column last.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for f in self.schema.features() {
            out.push_str(&f.name);
            out.push(',');
        }
        out.push_str(TARGET_COLUMN);
        out.push('\n');
        for (row, &t) in self.rows.iter().zip(&self.targets) {
            for (f, &level) in row.iter().enumerate() {
                out.push_str(&self.schema.feature(f).levels[level]);
                out.push(',');
            }
            out.push_str(&self.schema.target_levels()[t]);
            out.push('\n');
        }
        out
    }
}

/// Resolve header cells against the schema: one column per feature plus the
/// target column. Returns (feature column positions, target column position).
fn resolve_header(header: &csv::StringRecord, schema: &FeatureSchema) -> Result<(Vec<usize>, usize)> {
    let mut feature_cols = vec![None; schema.n_features()];
    let mut target_col = None;
    for (col, name) in header.iter().enumerate() {
        let name = name.trim();
        if name.eq_ignore_ascii_case(TARGET_COLUMN) {
            if target_col.replace(col).is_some() {
                return Err(Error::Csv {
                    line: 1,
                    msg: format!("duplicate column {TARGET_COLUMN:?}"),
                });
            }
            continue;
        }
        match schema.feature_index(name) {
            Some(f) => {
                if feature_cols[f].replace(col).is_some() {
                    return Err(Error::Csv { line: 1, msg: format!("duplicate column {name:?}") });
                }
            }
            None => {
                return Err(Error::Csv { line: 1, msg: format!("unknown column {name:?}") });
            }
        }
    }
    let mut cols = Vec::with_capacity(schema.n_features());
    for (f, col) in feature_cols.into_iter().enumerate() {
        match col {
            Some(c) => cols.push(c),
            None => {
                return Err(Error::Csv {
                    line: 1,
                    msg: format!("missing column {:?}", schema.feature(f).name),
                });
            }
        }
    }
    let target = target_col.ok_or(Error::Csv {
        line: 1,
        msg: format!("missing column {TARGET_COLUMN:?}"),
    })?;
    Ok((cols, target))
}

fn record_line(record: &csv::StringRecord, fallback: u64) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(fallback)
}

fn read_records(content: &[u8]) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(content);
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Csv { line, msg: e.to_string() }
        })?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Csv { line: 1, msg: "empty file".into() });
    }
    Ok(records)
}

fn parse_level_cell(
    cell: &str,
    schema: &FeatureSchema,
    feature: usize,
    line: u64,
) -> Result<usize> {
    let token = cell.trim();
    schema.level_index(feature, token).ok_or_else(|| Error::Csv {
        line,
        msg: format!(
            "unknown level {:?} for feature {}",
            token,
            schema.feature(feature).name
        ),
    })
}

/// Parse a CSV document into a [`Dataset`].
///
/// The first line must be a header naming every schema feature plus the
/// target column `P`, in any order. Level and class names match
/// case-insensitively. Each failure reports the offending line number.
pub fn parse_csv(content: &[u8], schema: &FeatureSchema) -> Result<Dataset> {
    let records = read_records(content)?;
    let (cols, target_col) = resolve_header(&records[0], schema)?;
    let width = records[0].len();

    let mut rows = Vec::with_capacity(records.len() - 1);
    let mut targets = Vec::with_capacity(records.len() - 1);
    for (i, record) in records.iter().enumerate().skip(1) {
        let line = record_line(record, i as u64 + 1);
        if record.len() != width {
            return Err(Error::Csv {
                line,
                msg: format!("expected {} fields, found {}", width, record.len()),
            });
        }
        let mut row = Vec::with_capacity(schema.n_features());
        for (f, &col) in cols.iter().enumerate() {
            row.push(parse_level_cell(&record[col], schema, f, line)?);
        }
        let token = record[target_col].trim();
        let target = schema.target_index(token).ok_or_else(|| Error::Csv {
            line,
            msg: format!("unknown target level {token:?}"),
        })?;
        rows.push(row);
        targets.push(target);
    }
    Dataset::new(schema.clone(), rows, targets)
}

/// Parse a CSV of candidate records without requiring the target column.
///
/// Header and level rules match [`parse_csv`]; a `P` column, if present, is
/// ignored. Used for screening and prediction inputs.
pub fn parse_candidates_csv(content: &[u8], schema: &FeatureSchema) -> Result<Vec<Vec<usize>>> {
    let records = read_records(content)?;
    let header = &records[0];
    let mut feature_cols = vec![None; schema.n_features()];
    for (col, name) in header.iter().enumerate() {
        let name = name.trim();
        if name.eq_ignore_ascii_case(TARGET_COLUMN) {
            continue;
        }
        match schema.feature_index(name) {
            Some(f) => {
                if feature_cols[f].replace(col).is_some() {
                    return Err(Error::Csv { line: 1, msg: format!("duplicate column {name:?}") });
                }
            }
            None => return Err(Error::Csv { line: 1, msg: format!("unknown column {name:?}") }),
        }
    }
    let mut cols = Vec::with_capacity(schema.n_features());
    for (f, col) in feature_cols.into_iter().enumerate() {
        match col {
            Some(c) => cols.push(c),
            None => {
                return Err(Error::Csv {
                    line: 1,
                    msg: format!("missing column {:?}", schema.feature(f).name),
                });
            }
        }
    }
    let width = header.len();
    let mut rows = Vec::with_capacity(records.len() - 1);
    for (i, record) in records.iter().enumerate().skip(1) {
        let line = record_line(record, i as u64 + 1);
        if record.len() != width {
            return Err(Error::Csv {
                line,
                msg: format!("expected {} fields, found {}", width, record.len()),
            });
        }
        let mut row = Vec::with_capacity(schema.n_features());
        for (f, &col) in cols.iter().enumerate() {
            row.push(parse_level_cell(&record[col], schema, f, line)?);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Assignment of every row to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    /// Row indices held out by `fold`.
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    /// Row indices available for training against `fold`.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

/// Stratified k-fold assignment.
///
/// Rows of each class are shuffled, then all rows are dealt round-robin
/// with a fold counter that carries across classes. Both fold sizes and
/// per-class fold counts differ by at most one. Deterministic in `seed`.
pub fn stratified_folds(data: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    let n = data.n_rows();
    if k < 2 || k > n {
        return Err(Error::Parameter(format!("k={k} must satisfy 2 <= k <= n={n}")));
    }
    let n_classes = data.schema().n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for i in 0..n {
        by_class[data.target(i)].push(i);
    }
    let mut assignment = vec![0usize; n];
    let mut next_fold = 0usize;
    for (class, rows) in by_class.iter_mut().enumerate() {
        let mut rng = stream(seed, DOMAIN_FOLDS, class as u64);
        rows.shuffle(&mut rng);
        for &row in rows.iter() {
            assignment[row] = next_fold;
            next_fold = (next_fold + 1) % k;
        }
    }
    Ok(FoldAssignment { k, assignment })
}

/// Specification for a synthetic candidate dataset with known ground truth.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_rows: usize,
    pub noise_rate: f64,
    pub seed: u64,
    /// Target level for each (DSK, RAS, PS) level triple.
    pub ground_truth: GroundTruth,
}

impl SynthSpec {
    /// Synthetic spec with the built-in screening-logic ground truth.
    pub fn new(n_rows: usize, noise_rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&noise_rate) {
            return Err(Error::Parameter(format!("noise_rate {noise_rate} outside [0, 1]")));
        }
        Ok(Self { n_rows, noise_rate, seed, ground_truth: GroundTruth::screening_logic() })
    }
}

/// Total mapping from (DSK, RAS, PS) level triples to target classes,
/// indexed `[dsk][ras][ps]` with levels Good=0, Average=1, Poor=2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth(pub [[[usize; 3]; 3]; 3]);

impl GroundTruth {
    /// The built-in accept/reject screening logic collapsed to a target:
    /// strong-accept paths map to Good, marginal-accept paths to Average,
    /// reject paths to Poor.
    pub fn screening_logic() -> Self {
        const GOOD: usize = 0;
        const AVERAGE: usize = 1;
        const POOR: usize = 2;
        let mut table = [[[POOR; 3]; 3]; 3];
        // DSK Good, RAS Good or Average: strong accept regardless of PS.
        table[GOOD][GOOD] = [GOOD; 3];
        table[GOOD][AVERAGE] = [GOOD; 3];
        // DSK Average, RAS Good: marginal accept regardless of PS.
        table[AVERAGE][GOOD] = [AVERAGE; 3];
        // DSK Good, RAS Poor: rescued only by strong programming skills.
        table[GOOD][POOR][GOOD] = AVERAGE;
        // DSK Average, RAS Average: marginal accept via programming skills.
        table[AVERAGE][AVERAGE][GOOD] = AVERAGE;
        GroundTruth(table)
    }

    pub fn target(&self, dsk: usize, ras: usize, ps: usize) -> usize {
        self.0[dsk][ras][ps]
    }
}

/// Generate a synthetic dataset over the default candidate schema.
///
/// All six features are drawn uniformly; the target is the ground truth of
/// (DSK, RAS, PS), flipped to a uniformly chosen different class with
/// probability `noise_rate`. CS, TE, and GPA never influence the target.
/// Byte-identical output for identical specs.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&spec.noise_rate) {
        return Err(Error::Parameter(format!("noise_rate {} outside [0, 1]", spec.noise_rate)));
    }
    for plane in &spec.ground_truth.0 {
        for row in plane {
            for &t in row {
                if t >= 3 {
                    return Err(Error::Parameter(format!("ground truth class {t} out of range")));
                }
            }
        }
    }
    let schema = FeatureSchema::candidate_default();
    let ps_idx = schema.feature_index("PS").expect("default schema");
    let ras_idx = schema.feature_index("RAS").expect("default schema");
    let dsk_idx = schema.feature_index("DSK").expect("default schema");

    let mut rng = stream(spec.seed, DOMAIN_SYNTH, 0);
    let n_classes = schema.n_classes();
    let mut rows = Vec::with_capacity(spec.n_rows);
    let mut targets = Vec::with_capacity(spec.n_rows);
    for _ in 0..spec.n_rows {
        let row: Vec<usize> = (0..schema.n_features())
            .map(|f| rng.gen_range(0..schema.n_levels(f)))
            .collect();
        let mut target = spec
            .ground_truth
            .target(row[dsk_idx], row[ras_idx], row[ps_idx]);
        if rng.gen::<f64>() < spec.noise_rate {
            // Replace with a uniformly chosen *different* class.
            let offset = rng.gen_range(1..n_classes);
            target = (target + offset) % n_classes;
        }
        rows.push(row);
        targets.push(target);
    }
    Dataset::new(schema, rows, targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorize_boundaries() {
        assert_eq!(categorize_score(80.0).unwrap(), ScoreBand::Good);
        assert_eq!(categorize_score(75.0).unwrap(), ScoreBand::Average);
        assert_eq!(categorize_score(50.0).unwrap(), ScoreBand::Average);
        assert_eq!(categorize_score(30.0).unwrap(), ScoreBand::Poor);
        assert_eq!(categorize_score(0.0).unwrap(), ScoreBand::Poor);
        assert_eq!(categorize_score(100.0).unwrap(), ScoreBand::Good);
    }

    #[test]
    fn categorize_rejects_out_of_range() {
        assert!(categorize_score(-0.5).is_err());
        assert!(categorize_score(100.5).is_err());
        assert!(categorize_score(f64::NAN).is_err());
    }

    #[test]
    fn parse_identity_row() {
        let schema = FeatureSchema::candidate_default();
        let csv = "PS,RAS,DSK,TE,GPA,CS,P\nGood,Good,Good,Good,Good,Good,Good\n";
        let ds = parse_csv(csv.as_bytes(), &schema).unwrap();
        assert_eq!(ds.n_rows(), 1);
        assert_eq!(ds.row(0), &[0, 0, 0, 0, 0, 0]);
        assert_eq!(ds.target(0), 0);
    }

    #[test]
    fn parse_rejects_unknown_level_with_line() {
        let schema = FeatureSchema::candidate_default();
        let csv = "PS,RAS,DSK,TE,GPA,CS,P\nGood,Good,Good,Good,Good,Good,Good\nExcellent,Good,Good,Good,Good,Good,Good\n";
        let err = parse_csv(csv.as_bytes(), &schema).unwrap_err();
        match err {
            Error::Csv { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("Excellent"), "{msg}");
                assert!(msg.contains("PS"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_is_case_insensitive() {
        let schema = FeatureSchema::candidate_default();
        let upper = "PS,RAS,DSK,TE,GPA,CS,P\nGood,Average,Poor,Bad,Good,Average,Poor\n\
                     Average,Average,Good,Good,Poor,Poor,Good\n\
                     Poor,Good,Average,Bad,Average,Good,Average\n\
                     Good,Good,Good,Good,Good,Good,Good\n";
        let folded = upper.to_ascii_lowercase().replace("good,", "gOOd,");
        let a = parse_csv(upper.as_bytes(), &schema).unwrap();
        let b = parse_csv(folded.as_bytes(), &schema).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_accepts_any_column_order() {
        let schema = FeatureSchema::candidate_default();
        let csv = "P,CS,GPA,TE,DSK,RAS,PS\nPoor,Good,Average,Bad,Poor,Average,Good\n";
        let ds = parse_csv(csv.as_bytes(), &schema).unwrap();
        assert_eq!(ds.row(0), &[0, 1, 2, 1, 1, 0]);
        assert_eq!(ds.target(0), 2);
    }

    #[test]
    fn parse_rejects_missing_column() {
        let schema = FeatureSchema::candidate_default();
        let csv = "PS,RAS,DSK,TE,GPA,P\nGood,Good,Good,Good,Good,Good\n";
        let err = parse_csv(csv.as_bytes(), &schema).unwrap_err();
        match err {
            Error::Csv { line, msg } => {
                assert_eq!(line, 1);
                assert!(msg.contains("CS"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_ragged_row() {
        let schema = FeatureSchema::candidate_default();
        let csv = "PS,RAS,DSK,TE,GPA,CS,P\nGood,Good,Good\n";
        let err = parse_csv(csv.as_bytes(), &schema).unwrap_err();
        match err {
            Error::Csv { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_empty_file() {
        let schema = FeatureSchema::candidate_default();
        assert!(matches!(
            parse_csv(b"", &schema),
            Err(Error::Csv { line: 1, .. })
        ));
    }

    #[test]
    fn parse_rejects_bad_for_non_te() {
        let schema = FeatureSchema::candidate_default();
        // "Bad" is a TE level only; PS must reject it.
        let csv = "PS,RAS,DSK,TE,GPA,CS,P\nBad,Good,Good,Bad,Good,Good,Good\n";
        let err = parse_csv(csv.as_bytes(), &schema).unwrap_err();
        match err {
            Error::Csv { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("PS"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_roundtrip_identity() {
        let spec = SynthSpec::new(40, 0.3, 9).unwrap();
        let ds = generate_synthetic(&spec).unwrap();
        let back = parse_csv(ds.to_csv().as_bytes(), ds.schema()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn candidates_csv_ignores_target_column() {
        let schema = FeatureSchema::candidate_default();
        let with_p = "PS,RAS,DSK,TE,GPA,CS,P\nGood,Average,Poor,Bad,Good,Average,Poor\n";
        let without_p = "PS,RAS,DSK,TE,GPA,CS\nGood,Average,Poor,Bad,Good,Average\n";
        let a = parse_candidates_csv(with_p.as_bytes(), &schema).unwrap();
        let b = parse_candidates_csv(without_p.as_bytes(), &schema).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], vec![0, 1, 2, 1, 0, 1]);
    }

    #[test]
    fn folds_leave_one_out_shape() {
        let spec = SynthSpec::new(10, 0.0, 1).unwrap();
        let ds = generate_synthetic(&spec).unwrap();
        let folds = stratified_folds(&ds, 10, 0).unwrap();
        for fold in 0..10 {
            assert_eq!(folds.test_rows(fold).len(), 1);
        }
    }

    #[test]
    fn folds_perfect_stratification() {
        let schema = FeatureSchema::candidate_default();
        let rows = vec![vec![0usize; 6]; 9];
        let targets = vec![0, 0, 0, 1, 1, 1, 2, 2, 2];
        let ds = Dataset::new(schema, rows, targets).unwrap();
        let folds = stratified_folds(&ds, 3, 4).unwrap();
        for fold in 0..3 {
            let test = folds.test_rows(fold);
            assert_eq!(test.len(), 3);
            let mut classes: Vec<usize> = test.iter().map(|&i| ds.target(i)).collect();
            classes.sort_unstable();
            assert_eq!(classes, vec![0, 1, 2]);
        }
    }

    #[test]
    fn folds_deterministic() {
        let spec = SynthSpec::new(57, 0.2, 3).unwrap();
        let ds = generate_synthetic(&spec).unwrap();
        let a = stratified_folds(&ds, 10, 11).unwrap();
        let b = stratified_folds(&ds, 10, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn folds_reject_bad_k() {
        let spec = SynthSpec::new(5, 0.0, 1).unwrap();
        let ds = generate_synthetic(&spec).unwrap();
        assert!(stratified_folds(&ds, 1, 0).is_err());
        assert!(stratified_folds(&ds, 6, 0).is_err());
    }

    #[test]
    fn synthetic_zero_noise_matches_ground_truth() {
        let spec = SynthSpec::new(500, 0.0, 7).unwrap();
        let ds = generate_synthetic(&spec).unwrap();
        let schema = ds.schema();
        let (ps, ras, dsk) = (
            schema.feature_index("PS").unwrap(),
            schema.feature_index("RAS").unwrap(),
            schema.feature_index("DSK").unwrap(),
        );
        for i in 0..ds.n_rows() {
            let row = ds.row(i);
            assert_eq!(
                ds.target(i),
                spec.ground_truth.target(row[dsk], row[ras], row[ps])
            );
        }
    }

    #[test]
    fn synthetic_deterministic() {
        let spec = SynthSpec::new(200, 0.4, 123).unwrap();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn synthetic_full_noise_never_matches() {
        let spec = SynthSpec::new(10_000, 1.0, 5).unwrap();
        let ds = generate_synthetic(&spec).unwrap();
        let schema = ds.schema();
        let (ps, ras, dsk) = (
            schema.feature_index("PS").unwrap(),
            schema.feature_index("RAS").unwrap(),
            schema.feature_index("DSK").unwrap(),
        );
        let matches = (0..ds.n_rows())
            .filter(|&i| {
                let row = ds.row(i);
                ds.target(i) == spec.ground_truth.target(row[dsk], row[ras], row[ps])
            })
            .count();
        assert_eq!(matches, 0);
    }

    #[test]
    fn ground_truth_class_balance() {
        let gt = GroundTruth::screening_logic();
        let mut counts = [0usize; 3];
        for dsk in 0..3 {
            for ras in 0..3 {
                for ps in 0..3 {
                    counts[gt.target(dsk, ras, ps)] += 1;
                }
            }
        }
        assert_eq!(counts, [6, 5, 16]);
    }
}
