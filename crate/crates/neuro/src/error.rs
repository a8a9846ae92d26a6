use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NeuroError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("the skeleton sequence is empty")]
    EmptySkeleton,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },
    #[error("vocabulary hash mismatch: checkpoint {expected}, data {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("no grammar-legal continuation: {0}")]
    GrammarDeadlock(String),
    #[error("skeleton needs {needed} bars but at most {max_bars} may be generated")]
    SkeletonOverflow { needed: u32, max_bars: u32 },
    #[error("prompt conflicts with the skeleton: {0}")]
    PromptConflict(String),
    #[error("invalid token sequence: {0}")]
    InvalidSequence(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("wrong model role: expected {expected}, found {found}")]
    WrongRole { expected: String, found: String },
}
