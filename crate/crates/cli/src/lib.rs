//! Command-line pipeline: MIDI ingest through skeleton extraction, training,
//! generation and evaluation, with every artifact under one work directory.

pub mod artifact;
pub mod config;
pub mod error;
pub mod stages;
