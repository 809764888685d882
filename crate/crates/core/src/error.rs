use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("record {index}: malformed record: {reason}")]
    MalformedRecord { index: usize, reason: String },

    #[error("sentence {sentence}: cannot align mention {surface:?}: {reason}")]
    Alignment {
        sentence: String,
        surface: String,
        reason: String,
    },

    #[error("sentence {sentence}: relation {relation:?} is not in the schema")]
    UnknownRelation { sentence: String, relation: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("sentence {sentence}: two triples share tag cell ({head}, {relation}, {tail})")]
    TagCollision {
        sentence: String,
        head: usize,
        relation: usize,
        tail: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sentence {sentence}: reconstruction failed: {reason}")]
    Reconstruction { sentence: String, reason: String },

    #[error("block {block}: empty span")]
    EmptySpan { block: String },

    #[error("embedding provider error: {0}")]
    Provider(String),

    #[error("embedding transport failed after {attempts} attempt(s): {reason}")]
    Transport { attempts: u32, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("topic model error: {0}")]
    Topic(String),
}
