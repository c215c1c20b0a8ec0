use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FeatureFamily, FeatureVector, ForecastError};
use crate::clock::Timestamp;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitOptions {
    /// Regularize instead of failing when the design matrix is rank deficient.
    pub ridge_fallback: bool,
}

/// Linear load model over one feature family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub family: FeatureFamily,
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub train_samples: usize,
    /// First and last training timestamps, when known.
    pub train_window: Option<(Timestamp, Timestamp)>,
    /// Set when the ridge fallback was used.
    pub ridge_lambda: Option<f64>,
}

impl Predictor {
    pub fn predict(&self, x: &FeatureVector) -> Result<f64, ForecastError> {
        if x.family != self.family || x.values.len() != self.coefficients.len() {
            return Err(ForecastError::LayoutMismatch {
                expected: self.coefficients.len(),
                found: x.values.len(),
            });
        }
        Ok(x.values
            .iter()
            .zip(&self.coefficients)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn with_window(mut self, first: Timestamp, last: Timestamp) -> Self {
        self.train_window = Some((first, last));
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("predictor serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ForecastError> {
        let p: Predictor = serde_json::from_str(s).map_err(|e| ForecastError::Invalid(e.to_string()))?;
        if p.coefficients.len() != p.family.layout().len() {
            return Err(ForecastError::LayoutMismatch {
                expected: p.family.layout().len(),
                found: p.coefficients.len(),
            });
        }
        Ok(p)
    }
}

/// Ordinary least squares over feature vectors of one family.
///
/// Full-rank designs are solved through the SVD. Rank-deficient designs fail
/// unless `ridge_fallback` is set, in which case every coefficient except the
/// intercept is penalized with lambda = 1e-8 * trace(X'X) / p.
pub fn fit_least_squares(
    samples: &[FeatureVector],
    targets: &[f64],
    options: FitOptions,
) -> Result<Predictor, ForecastError> {
    if samples.len() != targets.len() {
        return Err(ForecastError::LengthMismatch {
            left: samples.len(),
            right: targets.len(),
        });
    }
    let family = samples.first().ok_or(ForecastError::Empty)?.family;
    let p = family.layout().len();
    if samples.iter().any(|s| s.family != family || s.values.len() != p) {
        return Err(ForecastError::LayoutMismatch {
            expected: p,
            found: samples.iter().map(|s| s.values.len()).find(|l| *l != p).unwrap_or(p),
        });
    }
    if samples.iter().flat_map(|s| &s.values).chain(targets).any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite);
    }
    let n = samples.len();
    if n < p && !options.ridge_fallback {
        return Err(ForecastError::InsufficientSamples { samples: n, features: p });
    }

    let x = DMatrix::from_row_iterator(n, p, samples.iter().flat_map(|s| s.values.iter().copied()));
    let y = DVector::from_column_slice(targets);

    let svd = x.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = sigma_max * n.max(p) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();

    let (beta, ridge_lambda) = if rank == p {
        let beta = svd
            .solve(&y, tol)
            .map_err(|e| ForecastError::Invalid(e.to_owned()))?;
        (beta, None)
    } else if options.ridge_fallback {
        let xtx = x.transpose() * &x;
        let lambda = (1e-8 * xtx.trace() / p as f64).max(f64::MIN_POSITIVE);
        let mut a = xtx;
        for i in 1..p {
            a[(i, i)] += lambda;
        }
        let b = x.transpose() * &y;
        let beta = match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => a
                .svd(true, true)
                .solve(&b, f64::EPSILON)
                .map_err(|e| ForecastError::Invalid(e.to_owned()))?,
        };
        (beta, Some(lambda))
    } else {
        return Err(ForecastError::RankDeficient { rank, features: p });
    };

    Ok(Predictor {
        family,
        feature_names: family.layout().iter().map(|s| (*s).to_owned()).collect(),
        coefficients: beta.iter().copied().collect(),
        train_samples: n,
        train_window: None,
        ridge_lambda,
    })
}

/// Root mean squared error.
pub fn rmse(predicted: &[f64], observed: &[f64]) -> Result<f64, ForecastError> {
    if predicted.len() != observed.len() {
        return Err(ForecastError::LengthMismatch {
            left: predicted.len(),
            right: observed.len(),
        });
    }
    if predicted.is_empty() {
        return Err(ForecastError::Empty);
    }
    let sse: f64 = predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| (p - o) * (p - o))
        .sum();
    Ok((sse / predicted.len() as f64).sqrt())
}
