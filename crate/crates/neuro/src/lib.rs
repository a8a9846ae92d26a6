//! Dense matrices with reverse-mode differentiation and Adam, and the two
//! generative models built on them: a memory transformer that writes
//! melodic skeletons and an encoder-decoder that inpaints a melody around a
//! given skeleton.

pub mod checkpoint;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod inpaint;
pub mod mat;
pub mod model;
pub mod optim;
pub mod params;
pub mod sample;
pub mod tape;
pub mod toy;
pub mod train;

pub use error::NeuroError;
pub use mat::{Mat, Scalar};
pub use model::{Logits, Memory, Model, ModelConfig, Role};
