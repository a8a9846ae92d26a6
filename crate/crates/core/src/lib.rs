//! Symbolic-music core: score model, dataset cleaning, tonal tension,
//! skeleton extraction, the MeMIDI token format and evaluation statistics.

pub mod error;
pub mod eval;
pub mod json;
pub mod memidi;
pub mod preprocess;
pub mod score;
pub mod skeleton;
pub mod smf;
pub mod tension;
