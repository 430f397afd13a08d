pub mod baselines;
pub mod checkpoint;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod layers;
pub mod metrics;
pub mod siamese;
pub mod synthetic;
pub mod table;
pub mod vocab;

pub use error::{Error, Result};
