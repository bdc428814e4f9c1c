//! Sequence models for predicting lithium-ion battery cycle life.

pub mod autodiff;
pub mod datapipe;
pub mod error;
pub mod seqmodel;
pub mod synthgen;
pub mod trainer;

pub use autodiff::{Tape, Tensor, Var};
pub use error::{Error, Result};
