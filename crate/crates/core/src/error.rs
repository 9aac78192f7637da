//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset handling, model training, evaluation, and
/// rule processing.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's preconditions.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A raw score fell outside the accepted range.
    #[error("score {value} outside [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    /// CSV ingestion failure, tagged with the 1-based line number.
    #[error("csv line {line}: {msg}")]
    Csv { line: u64, msg: String },

    /// A record or column did not conform to the feature schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Training data cannot support a model (e.g. only one class present).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A model was paired with data it was not trained on.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// An input with no defined result (e.g. impurity of zero counts).
    #[error("undefined input: {0}")]
    UndefinedInput(String),

    /// ROC AUC requested for a single-class truth vector.
    #[error("AUC undefined: {0}")]
    UndefinedAuc(String),

    /// All raw importances are zero, so percentages are undefined.
    #[error("importance values are all zero; percentages are undefined")]
    DegenerateImportance,

    /// A cross-validation fold could not be trained or evaluated.
    #[error("fold {fold}: {msg}")]
    Fold { fold: usize, msg: String },

    /// A selection tree violated totality or routing invariants.
    #[error("malformed selection tree: {0}")]
    MalformedTree(String),

    /// Pruning removed every feature, leaving nothing to build rules from.
    #[error("no features left after pruning; selection tree would be empty")]
    PruningSafeguard,

    /// Rules-text parse failure, tagged with the 1-based line number.
    #[error("rules line {line}: {msg}")]
    Rules { line: usize, msg: String },

    /// A serialized model could not be read or failed validation.
    #[error("model format: {0}")]
    ModelFormat(String),
}
