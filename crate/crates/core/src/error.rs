use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("malformed MIDI file: {0}")]
    MalformedFile(String),
    #[error("the file contains no note events")]
    NoNotes,
    #[error("unsupported MIDI file: {0}")]
    UnsupportedFormat(String),
    #[error("schema mismatch: expected {expected:?}, found {found:?}")]
    SchemaMismatch { expected: String, found: String },
    #[error("invalid field: {0}")]
    InvalidField(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("piece {0:?} has no key and key estimation is disabled")]
    UnknownKey(String),
    #[error("piece {source_id:?} rejected: {dropped} of {total} notes outside the pitch range")]
    RejectedPiece { source_id: String, dropped: usize, total: usize },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Debug, Error, PartialEq)]
pub enum SkeletonError {
    #[error("random proportion {0} must lie strictly between 0 and 1")]
    InvalidP(f64),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("mask length {mask} does not match note count {notes}")]
    MaskLength { mask: usize, notes: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum TokenError {
    #[error("value outside the vocabulary: {0}")]
    VocabViolation(String),
    #[error("grammar error at token {index}: {reason}")]
    GrammarError { index: usize, reason: String },
    #[error("cannot parse token {0:?}")]
    Parse(String),
    #[error("bad sequence file: {0}")]
    Format(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("histograms use different binning ({0} vs {1})")]
    BinningMismatch(String, String),
    #[error("t-test needs at least two samples per group (got {0} and {1})")]
    TooFewSamples(usize, usize),
    #[error("no observations for feature {0}")]
    EmptyFeature(String),
    #[error("paired test needs equal sample sizes (got {0} and {1})")]
    UnpairedSamples(usize, usize),
}
