//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Result`]. The variants
//! are deliberately fine-grained — each names one violated precondition or
//! failure mode, so callers (and the CLI's machine-readable error output)
//! can react to exactly what went wrong.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An extractor id was requested that is not present in the registry.
    #[error("unknown extractor `{id}`")]
    UnknownExtractor { id: String },

    /// A raw payload (or an input record) could not be parsed.
    #[error("unparseable payload: {detail}")]
    UnparseablePayload { detail: String },

    /// A feature value was NaN or infinite.
    #[error("non-finite value in feature dimension `{name}`")]
    NonFiniteFeature { name: String },

    /// Two feature vectors do not share the same dimension name/unit
    /// sequence, so no arithmetic between them is defined.
    #[error("incompatible feature vectors: {detail}")]
    IncompatibleVectors { detail: String },

    /// One state is located in time and the other in space.
    #[error("cannot difference a temporal state against a spatial one")]
    MixedLocation,

    /// A temporal operation received states whose timestamps are not
    /// strictly increasing.
    #[error("states not in strictly increasing time order (t={earlier} then t={later})")]
    NotOrdered { earlier: i64, later: i64 },

    /// A stream operation needs more states than it was given.
    #[error("insufficient history: need at least {needed} states, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    /// A weight profile contains a negative weight.
    #[error("negative weight for dimension `{name}`")]
    NegativeWeight { name: String },

    /// A spatial operation needs at least two sub-objects.
    #[error("too few sub-objects: need at least 2, got {got}")]
    TooFewSubObjects { got: usize },

    /// The history store could not be read, written, or locked.
    #[error("history storage failure: {detail}")]
    StorageFailure { detail: String },

    /// A state with this id is already stored.
    #[error("duplicate state id `{id}` in history")]
    DuplicateStateId { id: String },

    /// The operation needs at least one (eligible) stored state.
    #[error("history is empty (or holds no eligible states) for this operation")]
    EmptyHistory,

    /// No stored state has the requested id.
    #[error("unknown state id `{id}`")]
    UnknownState { id: String },

    /// A record already labelled normal/abnormal cannot be relabelled.
    #[error("state `{id}` already carries a normal/abnormal label; labels are immutable once set")]
    LabelFixed { id: String },

    /// A threshold (θ, η, or k-sigma) was negative.
    #[error("negative threshold {value}")]
    NegativeThreshold { value: f64 },

    /// Threshold estimation needs at least two normal-labelled magnitudes.
    #[error("insufficient normal-labelled history: need at least {needed}, got {got}")]
    InsufficientNormalHistory { needed: usize, got: usize },

    /// Evidence must be observed at the same instant as the state.
    #[error("evidence timestamp {evidence} does not match state timestamp {state:?}")]
    TimestampMismatch { state: Option<i64>, evidence: i64 },

    /// Prefixing evidence dimensions still produced a duplicate name.
    #[error("fused dimension name `{name}` collides")]
    NameCollision { name: String },

    /// No template registered under this id (or the template's method does
    /// not match the requested one).
    #[error("unknown template `{id}`")]
    UnknownTemplate { id: String },

    /// The template references context the caller did not supply.
    #[error("missing prompt context: {what}")]
    MissingContext { what: String },

    /// The remote backend could not be reached (after retries).
    #[error("backend unreachable after {retries} attempts: {detail}")]
    BackendUnreachable { retries: u32, detail: String },

    /// The mock backend's script has no entry for this (template, trial).
    #[error("mock script has no response for template `{template_id}`, trial {trial}")]
    ScriptMiss { template_id: String, trial: u64 },

    /// The environment variable holding the backend credential is unset.
    #[error("auth environment variable `{var}` is not set")]
    AuthMissing { var: String },

    /// A partition-summary reply did not match the parse schema.
    #[error("unparseable partition summary: {detail}")]
    UnparseableSummary { detail: String },

    /// Two embeddings have different dimensions.
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// Cosine similarity is undefined for a zero vector.
    #[error("cosine similarity is undefined for a zero-magnitude vector")]
    ZeroVector,

    /// A statistical test needs at least two observations per sample.
    #[error("sample `{which}` too small: need at least 2 observations, got {got}")]
    SampleTooSmall { which: String, got: usize },

    /// Both samples have zero variance, so no t statistic exists.
    #[error("degenerate variance: both samples are constant")]
    DegenerateVariance,

    /// The evaluation results lack one of the two methods.
    #[error("no trial results for method `{method}`")]
    MissingMethod { method: String },

    /// A trial failed; carries which one and why.
    #[error("trial {trial_index} of method `{method}` failed: {source}")]
    Trial {
        method: String,
        trial_index: u64,
        #[source]
        source: Box<Error>,
    },

    /// A configuration file is missing, malformed, or self-contradictory.
    #[error("configuration error: {detail}")]
    Config { detail: String },

    /// Plain I/O failure outside the history store.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// The stable variant name, used as the machine-readable `error` field
    /// in the CLI's JSON error output.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Error::UnknownExtractor { .. } => "UnknownExtractor",
            Error::UnparseablePayload { .. } => "UnparseablePayload",
            Error::NonFiniteFeature { .. } => "NonFiniteFeature",
            Error::IncompatibleVectors { .. } => "IncompatibleVectors",
            Error::MixedLocation => "MixedLocation",
            Error::NotOrdered { .. } => "NotOrdered",
            Error::InsufficientHistory { .. } => "InsufficientHistory",
            Error::NegativeWeight { .. } => "NegativeWeight",
            Error::TooFewSubObjects { .. } => "TooFewSubObjects",
            Error::StorageFailure { .. } => "StorageFailure",
            Error::DuplicateStateId { .. } => "DuplicateStateId",
            Error::EmptyHistory => "EmptyHistory",
            Error::UnknownState { .. } => "UnknownState",
            Error::LabelFixed { .. } => "LabelFixed",
            Error::NegativeThreshold { .. } => "NegativeThreshold",
            Error::InsufficientNormalHistory { .. } => "InsufficientNormalHistory",
            Error::TimestampMismatch { .. } => "TimestampMismatch",
            Error::NameCollision { .. } => "NameCollision",
            Error::UnknownTemplate { .. } => "UnknownTemplate",
            Error::MissingContext { .. } => "MissingContext",
            Error::BackendUnreachable { .. } => "BackendUnreachable",
            Error::ScriptMiss { .. } => "ScriptMiss",
            Error::AuthMissing { .. } => "AuthMissing",
            Error::UnparseableSummary { .. } => "UnparseableSummary",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ZeroVector => "ZeroVector",
            Error::SampleTooSmall { .. } => "SampleTooSmall",
            Error::DegenerateVariance => "DegenerateVariance",
            Error::MissingMethod { .. } => "MissingMethod",
            Error::Trial { .. } => "Trial",
            Error::Config { .. } => "Config",
            Error::Io(..) => "Io",
        }
    }
}
