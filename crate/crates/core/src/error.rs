use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("line {line}: {message}")]
    Line { line: usize, message: String },

    // ontology
    #[error("empty ontology: at least one aspect is required")]
    EmptyOntology,
    #[error("duplicate {kind} id \"{id}\"")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{at}: {message}")]
    InvalidOntology { at: String, message: String },
    #[error("malformed label path \"{0}\"")]
    MalformedPath(String),
    #[error("unknown aspect \"{0}\"")]
    UnknownAspect(String),
    #[error("unknown element \"{element}\" in aspect \"{aspect}\"")]
    UnknownElement { aspect: String, element: String },
    #[error("unknown mode \"{mode}\" in element \"{aspect}/{element}\"")]
    UnknownMode {
        aspect: String,
        element: String,
        mode: String,
    },

    // corpus
    #[error("duplicate instance id \"{0}\"")]
    DuplicateInstance(String),
    #[error("unknown instance id \"{0}\"")]
    UnknownInstance(String),
    #[error("invalid fold plan: {0}")]
    InvalidFolds(String),
    #[error("missing gold label for instance \"{0}\"")]
    MissingGold(String),

    // annotation
    #[error("{0}")]
    InvalidInput(String),
    #[error("kappa undefined: chance agreement is 1 but observed agreement is {observed}")]
    UndefinedKappa { observed: f64 },
    #[error("invalid adjudication policy: {0}")]
    InvalidPolicy(String),

    // features
    #[error("no documents to fit on")]
    NoDocuments,
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    // models
    #[error("training failed: {0}")]
    Training(String),
    #[error("training diverged at epoch {epoch}: loss {loss} after {increases} consecutive increases")]
    Diverged {
        epoch: usize,
        loss: f64,
        increases: usize,
    },
    #[error("undefined cosine: zero-norm vector")]
    UndefinedCosine,
    #[error("no route for label path \"{0}\" and no default model")]
    NoRoute(String),
    #[error("no trained model for label path \"{path}\" (model {model})")]
    MissingModel { path: String, model: String },
    #[error("unsupported model family for {operation}: {family}")]
    WrongFamily {
        operation: &'static str,
        family: String,
    },
    #[error("artifact format version {found} is not supported (this build reads {supported})")]
    VersionMismatch { found: String, supported: String },
    #[error("artifact checksum mismatch")]
    Checksum,
    #[error("feature space mismatch: model expects {expected}, got {actual}")]
    FeatureSpaceMismatch { expected: String, actual: String },

    // evaluate
    #[error("statistical test undefined: {0}")]
    Statistics(String),
    #[error("metric undefined: {0}")]
    MetricUndefined(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}
