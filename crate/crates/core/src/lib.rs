//! Contrastive pretraining of a graph transformer against a frozen text encoder
//! on LLM-written graph summaries, with an adversarial inner loop that
//! approximates the worst-case (invariant) alignment, plus zero-shot transfer,
//! graph prompt tuning and Monte-Carlo checks of the supporting theory.

pub mod adapt;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod pretrain;
pub mod synthetic;
pub mod tag;
pub mod tape;
pub mod theory;
pub mod text;

pub use error::{Error, Result};
