//! Cluster-complexity scoring for monochrome 2D scatterplots.
//!
//! The scoring pipeline has three stages:
//!
//! 1. [`gmm`] fits bivariate Gaussian mixtures by EM and picks the number of
//!    components `K*` by BIC.
//! 2. Every pair of fitted components is mapped to an 8-dimensional,
//!    similarity-invariant feature vector ([`pairspace`]) and a classifier
//!    trained on human judgments ([`mergemodel`]) decides whether the pair is
//!    perceived as one cluster.
//! 3. [`vqm`] counts the connected components `M` of the resulting merge
//!    graph; scatterplots are ranked by `(M, K*)` lexicographically.
//!
//! [`augment`] turns judged two-component scatterplots into a training corpus,
//! [`eval`] holds the agreement statistics used to validate the score, and
//! [`synth`] simulates judged benchmarks for testing without the original data.

pub mod augment;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod io;
pub mod mergemodel;
pub mod pairspace;
pub mod seed;
pub mod synth;
pub mod vqm;

pub use error::{Error, Result};
