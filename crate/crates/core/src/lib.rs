//! Curriculum learning for rhetorical role labeling.
//!
//! The crate scores documents by discourse difficulty, paces them with a
//! baby-step scheduler, anneals label-similarity soft targets toward one-hot,
//! and trains a CRF sequence labeler under any combination of the two
//! curricula.

pub mod cli;
pub mod corpus;
pub mod difficulty;
pub mod discourse;
pub mod error;
pub mod label_curriculum;
pub mod labeler;
pub mod orchestrator;
pub mod pacing;
pub mod synthetic;

pub use error::{Error, Result};
