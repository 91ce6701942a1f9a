use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed input{}: {message}", line_suffix(*.line))]
    Malformed { line: Option<u64>, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("dataset has no usable rows ({dropped} dropped for missing values)")]
    EmptyDataset { dropped: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown metric `{id}` (valid metrics: {})", .known.join(", "))]
    UnknownMetric { id: String, known: Vec<String> },

    #[error("metric `{0}` is already registered")]
    DuplicateMetric(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("value `{value}` is not a legal value of feature `{feature}`")]
    UnknownValue { feature: String, value: String },

    #[error("subgroup selection is empty")]
    EmptySelection,

    #[error("clustering error: {0}")]
    Cluster(String),

    #[error("subgroup `{0}` has no members")]
    EmptyGroup(String),

    #[error("distributions have different supports ({0} vs {1} values)")]
    SupportMismatch(usize, usize),

    #[error("distribution does not sum to 1 (sum = {0})")]
    NotNormalized(f64),

    #[error("subgroup `{0}` is not a predicate group")]
    NotPredicate(String),

    #[error("counterfactual radius must be 1 or 2, got {0}")]
    InvalidRadius(usize),

    #[error("unknown subgroup `{0}`")]
    UnknownGroup(String),
}

fn line_suffix(line: Option<u64>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

pub type Result<T> = std::result::Result<T, Error>;
