use std::path::PathBuf;

use thiserror::Error;

use crate::cohort::TreatmentArm;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing required column `{0}` in header")]
    MissingColumn(String),
    #[error("invalid value for `{field}`: {message}")]
    InvalidField { field: String, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("feature `{0}` is missing in every record")]
    FeatureUnobserved(String),
    #[error("no record has every feature observed; cannot find imputation donors")]
    NoCompleteRecords,
    #[error("record `{id}` has missing feature `{field}`")]
    MissingFeature { id: String, field: String },
    #[error("no eligible neighbors for censored record `{0}` even after relaxing constraints")]
    ImputationInfeasible(String),
    #[error("record `{0}` has no time-to-event value")]
    MissingOutcome(String),
    #[error("labels contain a single class; both classes are required")]
    SingleClass,
    #[error("singular linear system; use lambda > 0")]
    Singular,
    #[error("solver did not converge (gradient norm {0:e})")]
    NotConverged(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("treatment arm {arm} has {count} training records, fewer than the minimum {min}")]
    ArmTooSmall {
        arm: TreatmentArm,
        count: usize,
        min: usize,
    },
    #[error("model bank has no entry for {0}")]
    MissingModel(String),
    #[error("unsupported format version `{found}` (expected `{expected}`)")]
    IncompatibleVersion { found: String, expected: String },
    #[error("failed to load bank entry {entry}: {message}")]
    CorruptEntry { entry: String, message: String },
    #[error("unknown subgroup attribute `{0}`")]
    UnknownAttribute(String),
    #[error("agreement set is empty")]
    EmptyAgreementSet,
    #[error("zero denominator: {0}")]
    ZeroDenominator(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            message: message.into(),
        }
    }
}
