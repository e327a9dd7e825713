//! Similarity-based k-NN classification and a meta-search over the model
//! space (k, distance kind, feature subset, feature weights).

pub mod dataset;
pub mod distance;
pub mod error;
pub mod eval;
pub mod knn;
pub mod metasearch;
pub mod optimize;
pub mod suites;

pub use error::{Error, Result};
