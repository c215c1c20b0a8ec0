use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    build_features, fit_least_squares, rmse, EffortEstimator, FeatureFamily, FeatureVector,
    FitOptions, ForecastError,
};
use crate::clock::Timestamp;
use crate::context::{context_query, ContextRecord};

/// Observed load at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub at: Timestamp,
    pub load: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    /// Share of observations used for training in each resample.
    pub train_fraction: f64,
    pub resamples: u32,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.7,
            resamples: 20,
            seed: 0,
            fit: FitOptions { ridge_fallback: true },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyScore {
    pub resample: u32,
    pub family: FeatureFamily,
    pub rmse: f64,
    pub train_count: usize,
    pub test_count: usize,
}

/// Features for each observation, using only records visible at its time.
pub fn features_for(
    records: &[ContextRecord],
    observations: &[Observation],
    family: FeatureFamily,
    estimator: &dyn EffortEstimator,
) -> Result<Vec<FeatureVector>, ForecastError> {
    observations
        .iter()
        .map(|o| {
            let visible = if family.uses_context() {
                context_query(records, o.at)
            } else {
                Vec::new()
            };
            build_features(&visible, family, o.at, estimator)
        })
        .collect()
}

/// Random train/test splits shared by all families; one score per
/// (resample, family), resample-major.
pub fn evaluate_families(
    records: &[ContextRecord],
    observations: &[Observation],
    families: &[FeatureFamily],
    split: &SplitConfig,
    estimator: &dyn EffortEstimator,
) -> Result<Vec<FamilyScore>, ForecastError> {
    let n = observations.len();
    let train_count = ((n as f64) * split.train_fraction).round() as usize;
    if train_count == 0 || train_count >= n {
        return Err(ForecastError::EmptySplit {
            observations: n,
            train_fraction: split.train_fraction,
        });
    }
    let loads: Vec<f64> = observations.iter().map(|o| o.load).collect();
    let table: Vec<Vec<FeatureVector>> = families
        .iter()
        .map(|f| features_for(records, observations, *f, estimator))
        .collect::<Result<_, _>>()?;

    let mut out = Vec::with_capacity(split.resamples as usize * families.len());
    for r in 0..split.resamples {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split.seed.wrapping_add(u64::from(r))));
        let (train, test) = idx.split_at(train_count);
        for (family, xs) in families.iter().zip(&table) {
            let tx: Vec<FeatureVector> = train.iter().map(|i| xs[*i].clone()).collect();
            let ty: Vec<f64> = train.iter().map(|i| loads[*i]).collect();
            let model = fit_least_squares(&tx, &ty, split.fit)?;
            let pred = test
                .iter()
                .map(|i| model.predict(&xs[*i]))
                .collect::<Result<Vec<_>, _>>()?;
            let obs: Vec<f64> = test.iter().map(|i| loads[*i]).collect();
            out.push(FamilyScore {
                resample: r,
                family: *family,
                rmse: rmse(&pred, &obs)?,
                train_count: train.len(),
                test_count: test.len(),
            });
        }
    }
    Ok(out)
}

/// Mean RMSE per family in the order given.
pub fn mean_rmse(scores: &[FamilyScore], families: &[FeatureFamily]) -> Vec<(FeatureFamily, f64)> {
    families
        .iter()
        .map(|f| {
            let v: Vec<f64> = scores.iter().filter(|s| s.family == *f).map(|s| s.rmse).collect();
            (*f, v.iter().sum::<f64>() / v.len().max(1) as f64)
        })
        .collect()
}
