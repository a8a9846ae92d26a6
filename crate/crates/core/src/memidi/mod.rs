//! MeMIDI event vocabulary and sequence codec.

pub mod codec;
pub mod grammar;
pub mod token;
pub mod vocab;

pub use codec::{detokenize, from_binary, from_text, to_binary, to_text, tokenize, MeMidiSequence, SequenceMeta};
pub use grammar::{EventType, Grammar, Phase};
pub use token::{TempoClass, Token};
pub use vocab::Vocabulary;
