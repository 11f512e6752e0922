//! Completability, completion and error prediction for partially observed
//! low-rank matrices.

pub mod completability;
pub mod completion;
pub mod error;
pub mod experiments;
pub mod field;
pub mod graph;
pub mod jacobian;
pub mod linalg;
pub mod mask;
pub mod random_masks;
pub mod rank_one;
pub mod rng;

pub use error::{Error, Result};
pub use mask::{ambient_dimension, BipartiteView, Mask, NoiseModel, PartialMatrix, Position};
