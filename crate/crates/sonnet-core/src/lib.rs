//! Joint neural model of sonnets: a word/character language model, an
//! iambic-stress model and an unsupervised rhyme model trained together on a
//! shared graph, plus constrained quatrain generation and an evaluation
//! harness for all three components.

pub mod batch;
pub mod cells;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod generate;
pub mod gradcheck;
pub mod graph;
pub mod lm;
pub mod meter;
pub mod optim;
pub mod params;
pub mod rhyme;
pub mod tensor;
pub mod train;

pub use error::{Result, SonnetError};
