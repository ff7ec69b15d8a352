use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Each variant maps to a stable machine-readable code and the module that raised it
/// (see [`Error::code`] and [`Error::module`]); the CLI surfaces both in its error JSON.
#[derive(Debug, Error)]
pub enum Error {
    // data
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("duplicate student_id `{0}`")]
    DuplicateStudentId(String),
    #[error("non-numeric cell at row {row}, column `{col}`")]
    NonNumericCell { row: usize, col: String },
    #[error("schema mismatch: expected {expected:?}, got {got:?}")]
    SchemaMismatch { expected: Vec<String>, got: Vec<String> },
    #[error("invalid label `{value}` at row {row}; expected 0 or 1")]
    BadLabel { row: usize, value: String },
    #[error("line {0}: timestamp does not parse")]
    BadTimestamp(usize),
    #[error("line {0}: comment text is empty")]
    EmptyText(usize),
    #[error("line {line}: malformed JSON: {message}")]
    MalformedJson { line: usize, message: String },
    #[error("line {line}: score {score} outside [-1, 1]")]
    ScoreOutOfRange { line: usize, score: f64 },

    // preprocess
    #[error("feature `{0}` has no observed values")]
    AllMissingFeature(String),
    #[error("matrix still contains missing cells")]
    NotImputed,
    #[error("outlier threshold must be positive, got {0}")]
    InvalidThreshold(f64),

    // sentiment
    #[error("training corpus has no `{0}` examples")]
    MissingClass(String),
    #[error("paired t-test needs at least 2 differences, got {0}")]
    DegenerateSample(usize),
    #[error("zero variance in differences with mean {mean} != mu0 {mu0}")]
    ZeroVariance { mean: f64, mu0: f64 },

    // models
    #[error("training labels contain a single class")]
    SingleClassTraining,
    #[error("feature mismatch: model expects {expected:?}, got {got:?}")]
    FeatureMismatch { expected: Vec<String>, got: Vec<String> },
    #[error("unsupported model format version {0}")]
    UnknownVersion(u32),
    #[error("invalid hyper-parameter: {0}")]
    InvalidHyperParameter(String),

    // ensemble
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown student `{0}`")]
    UnknownStudent(String),

    // explain
    #[error("exact SHAP supports at most {max} features, got {got}")]
    TooManyFeatures { got: usize, max: usize },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("no explanations to rank")]
    EmptyInput,
    #[error("k = {k} outside 1..={m}")]
    BadK { k: usize, m: usize },

    // eval
    #[error("{groups} distinct groups cannot fill {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("hyper-parameter grid is empty")]
    EmptyGrid,

    // synth
    #[error("invalid synthetic config: {0}")]
    BadConfig(String),

    #[error("I/O error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Stable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::DuplicateStudentId(_) => "DuplicateStudentId",
            Error::NonNumericCell { .. } => "NonNumericCell",
            Error::SchemaMismatch { .. } => "SchemaMismatch",
            Error::BadLabel { .. } => "BadLabel",
            Error::BadTimestamp(_) => "BadTimestamp",
            Error::EmptyText(_) => "EmptyText",
            Error::MalformedJson { .. } => "MalformedJson",
            Error::ScoreOutOfRange { .. } => "ScoreOutOfRange",
            Error::AllMissingFeature(_) => "AllMissingFeature",
            Error::NotImputed => "NotImputed",
            Error::InvalidThreshold(_) => "InvalidThreshold",
            Error::MissingClass(_) => "MissingClass",
            Error::DegenerateSample(_) => "DegenerateSample",
            Error::ZeroVariance { .. } => "ZeroVariance",
            Error::SingleClassTraining => "SingleClassTraining",
            Error::FeatureMismatch { .. } => "FeatureMismatch",
            Error::UnknownVersion(_) => "UnknownVersion",
            Error::InvalidHyperParameter(_) => "InvalidHyperParameter",
            Error::OutOfRange(_) => "OutOfRange",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::UnknownStudent(_) => "UnknownStudent",
            Error::TooManyFeatures { .. } => "TooManyFeatures",
            Error::EmptyBackground => "EmptyBackground",
            Error::EmptyInput => "EmptyInput",
            Error::BadK { .. } => "BadK",
            Error::TooFewGroups { .. } => "TooFewGroups",
            Error::EmptyGrid => "EmptyGrid",
            Error::BadConfig(_) => "BadConfig",
            Error::Io { .. } => "IoError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
        }
    }

    /// Library module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::MissingColumn(_)
            | Error::DuplicateStudentId(_)
            | Error::NonNumericCell { .. }
            | Error::SchemaMismatch { .. }
            | Error::BadLabel { .. }
            | Error::BadTimestamp(_)
            | Error::EmptyText(_)
            | Error::MalformedJson { .. }
            | Error::ScoreOutOfRange { .. } => "core_data",
            Error::AllMissingFeature(_) | Error::NotImputed | Error::InvalidThreshold(_) => {
                "preprocess"
            }
            Error::MissingClass(_) | Error::DegenerateSample(_) | Error::ZeroVariance { .. } => {
                "sentiment"
            }
            Error::SingleClassTraining
            | Error::FeatureMismatch { .. }
            | Error::UnknownVersion(_)
            | Error::InvalidHyperParameter(_) => "models",
            Error::OutOfRange(_) | Error::LengthMismatch(..) | Error::UnknownStudent(_) => {
                "ensemble"
            }
            Error::TooManyFeatures { .. }
            | Error::EmptyBackground
            | Error::EmptyInput
            | Error::BadK { .. } => "explain",
            Error::TooFewGroups { .. } | Error::EmptyGrid => "eval",
            Error::BadConfig(_) => "synth",
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => "io",
        }
    }
}
