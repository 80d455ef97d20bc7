//! Premise selection for first-order theorem proving.
//!
//! The pipeline turns a line-oriented corpus of TPTP conjectures and axioms
//! into labelled (conjecture, axiom) pair vectors and trains small dense
//! networks to predict premise relevance:
//!
//! 1. [`tptp`] parses the `C`/`+`/`-` dataset format and counts functor
//!    symbols per formula.
//! 2. [`signatures`] builds the functor vocabulary, sparse signature vectors
//!    and per-functor context distributions.
//! 3. [`nn`] is a small dense-network engine: affine layers, dropout,
//!    cross-entropy losses, RMSprop/Adam, training loop, gradient checking
//!    and tensor serialization.
//! 4. [`embedding`] trains the context-prediction network and compresses
//!    signatures to low-dimensional dense vectors.
//! 5. [`pairs`] assembles labelled pair vectors, splits train/test and
//!    standardizes columns.
//! 6. [`classifier`] builds, trains and evaluates the grid of two-hidden-layer
//!    relevance classifiers.
//! 7. [`pipeline`] drives everything end to end with cached, resumable stages.

pub mod classifier;
pub mod embedding;
pub mod hashes;
pub mod nn;
pub mod pairs;
pub mod pipeline;
pub mod signatures;
pub mod tptp;
