//! Morphological disambiguation: a window-scoring neural network over candidate
//! analyses plus lattice decoding.
//!
//! The pipeline: [`corpus`] reads sentences whose tokens carry one or more
//! candidate analyses, [`morph`] turns each analysis into a fixed feature
//! bundle under a per-language tagset, [`model`] scores windows of bundles
//! with embeddings and two tanh layers, [`trainer`] fits the scorer on
//! gold-vs-corrupted windows, [`decoder`] searches the candidate lattice for
//! the best analysis sequence, [`pretrain`] learns root embeddings from raw
//! root sequences, and [`eval`] measures disambiguation accuracy.
//!
//! Numeric code is generic over [`scalar::Scalar`]; the `f64` aliases below
//! are what the CLI and the file formats use.

pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod morph;
pub mod pretrain;
pub mod scalar;
pub mod storage;
pub mod trainer;

/// Model state at the precision used by training, decoding, and the model file.
pub type Model = model::ModelState<f64>;
/// Gradient set matching [`Model`].
pub type ModelGradients = model::Gradients<f64>;
/// Root embedding table matching [`Model`].
pub type RootVectors = pretrain::RootEmbeddings<f64>;
