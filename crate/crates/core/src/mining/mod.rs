//! One representative learner per family: k-means clustering, k-nearest
//! neighbour classification, least-squares regression, and a distance-based
//! anomaly scorer on top of k-means.

mod kmeans;
mod knn;
mod linreg;
mod rng;

use thiserror::Error;

pub use kmeans::{anomaly_score, kmeans_assign, kmeans_fit, kmeans_fit_traced, KMeansFit, KMeansModel};
pub use knn::{knn_predict, KnnModel};
pub use linreg::{linreg_fit, LinRegModel, PIVOT_EPS};
pub use rng::XorShift64Star;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MiningError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid k = {k} (n = {n})")]
    BadK { k: usize, n: usize },
    #[error("normal equations are singular (pivot below 1e-12)")]
    SingularMatrix,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model: {0}")]
    BadModel(String),
}

pub type Result<T, E = MiningError> = std::result::Result<T, E>;
