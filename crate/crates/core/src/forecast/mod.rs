//! Context-aware load forecasting: effort extraction, feature families,
//! least-squares predictors and RMSE evaluation.

mod effort;
mod evaluate;
mod features;
mod regression;

use thiserror::Error;

pub use effort::{
    estimate_effort_heuristic, CachedEstimator, EffortEstimator, HeuristicEstimator,
    RemoteEstimator, RemoteEstimatorConfig,
};
pub use evaluate::{
    evaluate_families, features_for, mean_rmse, FamilyScore, Observation, SplitConfig,
};
pub use features::{
    active_jobs, build_features, record_effort, FeatureFamily, FeatureVector, EFFORT_KEY,
    NUMERIC_KEYS,
};
pub use regression::{fit_least_squares, rmse, FitOptions, Predictor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForecastError {
    #[error("effort endpoint request failed: {0}")]
    Remote(String),
    #[error("effort endpoint returned an unusable body: {0}")]
    RemoteResponse(String),
    #[error("need at least {features} samples, got {samples}")]
    InsufficientSamples { samples: usize, features: usize },
    #[error("design matrix has rank {rank} < {features}")]
    RankDeficient { rank: usize, features: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("feature layout mismatch: expected {expected} values, found {found}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("no samples")]
    Empty,
    #[error("non-finite feature or target value")]
    NonFinite,
    #[error("train/test split of {observations} observations at fraction {train_fraction} leaves a side empty")]
    EmptySplit {
        observations: usize,
        train_fraction: f64,
    },
    #[error("{0}")]
    Invalid(String),
}
