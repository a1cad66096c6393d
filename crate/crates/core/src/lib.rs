//! Retrieval-augmented code summarization over code property graphs.
//!
//! The pipeline turns a C function into a code property graph
//! ([`cpg::CodeGraph`]), retrieves the most similar function from a corpus
//! ([`retrieval`]), injects the retrieved graph's node features into the
//! query graph, runs a hybrid static/dynamic message-passing encoder
//! ([`encoder`]) and decodes a summary with an attention LSTM and beam search
//! ([`decoder`]). All numerics run on the small reverse-mode tensor library in
//! [`tensor`].

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod cpg;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod frontend;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod tensor;
pub mod vocab;

pub use error::{Error, Result};
