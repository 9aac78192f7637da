//! Command-line front end for the recruitment screening pipeline:
//! dataset synthesis, forest training, prediction, evaluation, variable
//! importance, pruning, rule emission, and candidate screening.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use recruitrf::cart::Mtry;
use recruitrf::dataset::{
    generate_synthetic, parse_candidates_csv, parse_csv, Dataset, FeatureSchema, SynthSpec,
};
use recruitrf::forest::{
    oob_error, parse_model, predict_forest, serialize_model, train_forest, ForestParams,
    RandomForestModel, FORMAT_VERSION,
};
use recruitrf::importance::{
    importance_report, importance_svg, importance_tsv, prune_features, ImportanceReport,
    PruneResult,
};
use recruitrf::metrics::{cross_validate, evaluation_text, evaluation_tsv};
use recruitrf::selection::{
    derive_selection_tree, figure3_tree, parse_rules, rules_text, screen_candidate,
    AcceptPolicy, SelectionTree, FIG3_RULES,
};

fn version_string() -> &'static str {
    let v = format!("{} (model format {FORMAT_VERSION})", env!("CARGO_PKG_VERSION"));
    Box::leak(v.into_boxed_str())
}

#[derive(Parser)]
#[command(
    name = "recruitrf",
    version = version_string(),
    about = "Ensemble screening of job candidates over categorical attributes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Forest configuration shared by every training subcommand.
#[derive(Args, Clone)]
struct TrainOpts {
    /// Number of trees in the ensemble.
    #[arg(long, default_value_t = 500)]
    trees: usize,
    /// Split candidates per node: "auto" (floor(sqrt(p))) or a count.
    #[arg(long, default_value = "auto", value_parser = parse_mtry)]
    mtry: Mtry,
    /// Minimum rows per terminal node.
    #[arg(long = "min-node", default_value_t = 1)]
    min_node: usize,
    /// Master seed; every derived stream is a pure function of it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainOpts {
    fn params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.trees,
            mtry: self.mtry,
            min_node_size: self.min_node,
            seed: self.seed,
        }
    }
}

fn parse_mtry(s: &str) -> Result<Mtry, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Mtry::Auto);
    }
    s.parse::<usize>()
        .map(Mtry::Fixed)
        .map_err(|_| format!("expected \"auto\" or a positive integer, got {s:?}"))
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest on a labeled CSV and write the model JSON.
    Train {
        /// Labeled training data (columns PS,RAS,DSK,TE,GPA,CS,P).
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainOpts,
        /// Output model path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict classes and vote fractions for candidate rows.
    Predict {
        /// Trained model JSON.
        #[arg(long)]
        model: PathBuf,
        /// Candidate CSV (the P column is optional and ignored).
        #[arg(long)]
        input: PathBuf,
        /// Output TSV path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate a forest configuration and print the report.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Number of stratified folds.
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[command(flatten)]
        train: TrainOpts,
        /// Also write the report as TSV.
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Train and report per-feature importance (TSV and SVG dot plot).
    Importance {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainOpts,
        /// Report TSV path; standard output when omitted.
        #[arg(long)]
        tsv: Option<PathBuf>,
        /// Dot-plot SVG path.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Apply the importance threshold and list pruned and kept features.
    Prune {
        #[arg(long)]
        data: PathBuf,
        /// Percentage threshold P, strictly between 0 and 100.
        #[arg(long)]
        threshold: f64,
        #[command(flatten)]
        train: TrainOpts,
    },
    /// Emit a selection tree as rules text.
    Rules {
        /// Emit a built-in tree ("fig3") instead of deriving one.
        #[arg(long, conflicts_with_all = ["data", "threshold"])]
        builtin: Option<String>,
        /// Derive from this labeled CSV (requires --threshold).
        #[arg(long, requires = "threshold")]
        data: Option<PathBuf>,
        /// Pruning threshold used before derivation.
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        train: TrainOpts,
        /// Target classes mapped to ACCEPT leaves.
        #[arg(long, default_value = "Good,Average")]
        accept: String,
        /// Cap on the number of stacked tests.
        #[arg(long = "max-depth")]
        max_depth: Option<usize>,
        /// Output path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Screen candidates through a rules file and report verdicts.
    Screen {
        /// Rules source: "fig3" for the built-in tree, or a rules file.
        #[arg(long)]
        rules: String,
        /// Candidate CSV (the P column is optional and ignored).
        #[arg(long)]
        input: PathBuf,
        /// Output TSV path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic labeled dataset as CSV.
    Synth {
        #[arg(long)]
        rows: usize,
        /// Fraction of rows whose label is flipped to a wrong class.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    /// Bad invocation: missing files, malformed flag values. Exit 2.
    Usage(String),
    /// The pipeline itself failed. Exit 1.
    Runtime(String),
}

impl From<recruitrf::Error> for CliError {
    fn from(e: recruitrf::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Everything a subcommand produces; files are only written once the
/// whole computation has succeeded.
#[derive(Default)]
struct Emitted {
    stdout: String,
    files: Vec<(PathBuf, String)>,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match execute(cli.command) {
        Ok(emitted) => match flush(emitted) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    });
}

fn flush(emitted: Emitted) -> std::io::Result<()> {
    let mut written: Vec<&PathBuf> = Vec::new();
    for (path, content) in &emitted.files {
        match std::fs::write(path, content) {
            Ok(()) => written.push(path),
            Err(e) => {
                for w in written {
                    let _ = std::fs::remove_file(w);
                }
                return Err(std::io::Error::new(
                    e.kind(),
                    format!("writing {}: {e}", path.display()),
                ));
            }
        }
    }
    print!("{}", emitted.stdout);
    Ok(())
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file {} does not exist", path.display())))
    }
}

fn load_dataset(path: &Path, schema: &FeatureSchema) -> Result<Dataset, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
    Ok(parse_csv(&bytes, schema)?)
}

fn load_candidates(path: &Path, schema: &FeatureSchema) -> Result<Vec<Vec<usize>>, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
    Ok(parse_candidates_csv(&bytes, schema)?)
}

fn trained_with_report(
    data_path: &Path,
    train: &TrainOpts,
) -> Result<(Dataset, RandomForestModel, ImportanceReport), CliError> {
    let schema = FeatureSchema::candidate_default();
    let data = load_dataset(data_path, &schema)?;
    let model = train_forest(&data, &train.params())?;
    let report = importance_report(&model, &data, train.seed)?;
    Ok((data, model, report))
}

fn execute(command: Command) -> Result<Emitted, CliError> {
    match command {
        Command::Train { data, train, out } => {
            require_file(&data)?;
            let schema = FeatureSchema::candidate_default();
            let dataset = load_dataset(&data, &schema)?;
            let model = train_forest(&dataset, &train.params())?;
            let report = oob_error(&model, &dataset)?;
            let mut stdout = format!(
                "OOB error rate: {:.6} ({} rows evaluated",
                report.error_rate, report.evaluated
            );
            if report.skipped > 0 {
                let _ = write!(stdout, ", {} skipped", report.skipped);
            }
            stdout.push_str(")\n");
            Ok(Emitted { stdout, files: vec![(out, serialize_model(&model))] })
        }
        Command::Predict { model, input, out } => {
            require_file(&model)?;
            require_file(&input)?;
            let text = std::fs::read_to_string(&model)
                .map_err(|e| CliError::Runtime(format!("reading {}: {e}", model.display())))?;
            let model = parse_model(&text)?;
            let records = load_candidates(&input, &model.schema)?;
            let mut tsv = String::from("row\tpredicted");
            for level in model.schema.target_levels() {
                let _ = write!(tsv, "\tfrac_{level}");
            }
            tsv.push('\n');
            for (i, record) in records.iter().enumerate() {
                let vote = predict_forest(&model, record)?;
                let _ = write!(tsv, "{i}\t{}", model.schema.target_levels()[vote.predicted]);
                for f in &vote.vote_fractions {
                    let _ = write!(tsv, "\t{f}");
                }
                tsv.push('\n');
            }
            Ok(route(tsv, out))
        }
        Command::Evaluate { data, folds, train, tsv } => {
            require_file(&data)?;
            let schema = FeatureSchema::candidate_default();
            let dataset = load_dataset(&data, &schema)?;
            let report = cross_validate(&dataset, &train.params(), folds, train.seed)?;
            let stdout = evaluation_text(&report, &schema);
            let files = match tsv {
                Some(path) => vec![(path, evaluation_tsv(&report, &schema))],
                None => Vec::new(),
            };
            Ok(Emitted { stdout, files })
        }
        Command::Importance { data, train, tsv, svg } => {
            require_file(&data)?;
            let (dataset, _, report) = trained_with_report(&data, &train)?;
            let tsv_text = importance_tsv(&report, dataset.schema());
            let mut emitted = Emitted::default();
            match tsv {
                Some(path) => emitted.files.push((path, tsv_text)),
                None => emitted.stdout = tsv_text,
            }
            if let Some(path) = svg {
                emitted.files.push((path, importance_svg(&report, dataset.schema())));
            }
            Ok(emitted)
        }
        Command::Prune { data, threshold, train } => {
            require_file(&data)?;
            let (dataset, _, report) = trained_with_report(&data, &train)?;
            let prune = prune_features(&report.percent_mdg, threshold)?;
            Ok(Emitted { stdout: prune_listing(&prune, &report, dataset.schema()), files: Vec::new() })
        }
        Command::Rules { builtin, data, threshold, train, accept, max_depth, out } => {
            let text = match (builtin, data) {
                (Some(name), None) => {
                    if name != "fig3" {
                        return Err(CliError::Usage(format!(
                            "unknown built-in tree {name:?}; available: fig3"
                        )));
                    }
                    FIG3_RULES.to_string()
                }
                (None, Some(data_path)) => {
                    require_file(&data_path)?;
                    let threshold = threshold.expect("clap enforces --threshold with --data");
                    let (dataset, model, report) = trained_with_report(&data_path, &train)?;
                    let prune = prune_features(&report.percent_mdg, threshold)?;
                    let policy = AcceptPolicy {
                        accept_classes: parse_accept_classes(&accept, dataset.schema())?,
                        max_depth,
                    };
                    let tree =
                        derive_selection_tree(&model, &dataset, &report, &prune, &policy)?;
                    rules_text(&tree, dataset.schema())
                }
                (None, None) => {
                    return Err(CliError::Usage(
                        "rules needs either --builtin fig3 or --data with --threshold".into(),
                    ));
                }
                (Some(_), Some(_)) => unreachable!("clap marks the flags as conflicting"),
            };
            Ok(route(text, out))
        }
        Command::Screen { rules, input, out } => {
            let schema = FeatureSchema::candidate_default();
            let tree = load_rules(&rules, &schema)?;
            require_file(&input)?;
            let records = load_candidates(&input, &schema)?;
            let mut tsv = String::from("row\tverdict\tpath\n");
            for (i, record) in records.iter().enumerate() {
                let decision = screen_candidate(&tree, record)?;
                let path = decision
                    .path
                    .iter()
                    .map(|step| {
                        let feature = schema.feature(step.feature);
                        let matched: Vec<&str> =
                            step.matched.iter().map(|&l| feature.levels[l].as_str()).collect();
                        format!(
                            "{}={} in {{{}}}",
                            feature.name,
                            feature.levels[step.level],
                            matched.join(", ")
                        )
                    })
                    .collect::<Vec<_>>()
                    .join(" -> ");
                let _ = writeln!(tsv, "{i}\t{}\t{path}", decision.verdict.as_str());
            }
            Ok(route(tsv, out))
        }
        Command::Synth { rows, noise, seed, out } => {
            let spec = SynthSpec::new(rows, noise, seed)?;
            let data = generate_synthetic(&spec)?;
            Ok(route(data.to_csv(), out))
        }
    }
}

/// Send `text` to a file when a path was given, otherwise to stdout.
fn route(text: String, out: Option<PathBuf>) -> Emitted {
    match out {
        Some(path) => Emitted { stdout: String::new(), files: vec![(path, text)] },
        None => Emitted { stdout: text, files: Vec::new() },
    }
}

fn load_rules(source: &str, schema: &FeatureSchema) -> Result<SelectionTree, CliError> {
    if source == "fig3" {
        return Ok(figure3_tree());
    }
    let path = Path::new(source);
    require_file(path)?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
    Ok(parse_rules(&text, schema)?)
}

fn parse_accept_classes(spec: &str, schema: &FeatureSchema) -> Result<Vec<usize>, CliError> {
    let mut classes = Vec::new();
    for name in spec.split(',') {
        let name = name.trim();
        let class = schema.target_index(name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown target class {name:?}; expected one of {:?}",
                schema.target_levels()
            ))
        })?;
        if !classes.contains(&class) {
            classes.push(class);
        }
    }
    Ok(classes)
}

fn prune_listing(prune: &PruneResult, report: &ImportanceReport, schema: &FeatureSchema) -> String {
    let mut out = format!("Pruning threshold: {}\n", prune.threshold_p);
    out.push_str("Feature percentages (mean decrease in Gini):\n");
    let name_w = (0..schema.n_features())
        .map(|f| schema.feature(f).name.len())
        .max()
        .unwrap();
    for &f in &report.ranking {
        let status = if prune.pruned.contains(&f) { "pruned" } else { "kept" };
        let _ = writeln!(
            out,
            "  {:<name_w$}  {:>8.3}  {status}",
            schema.feature(f).name,
            report.percent_mdg[f]
        );
    }
    if prune.tie_groups.is_empty() {
        out.push_str("No tie groups straddle the cut.\n");
    } else {
        for group in &prune.tie_groups {
            let names: Vec<&str> =
                group.iter().map(|&f| schema.feature(f).name.as_str()).collect();
            let _ = writeln!(
                out,
                "Tie group straddling the cut: {{{}}} (equal percentages; the boundary is a judgment call)",
                names.join(", ")
            );
        }
    }
    out
}
