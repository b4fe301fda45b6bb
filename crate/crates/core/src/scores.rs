//! Nonconformity scores.
//!
//! A score `V(x, y)` must be monotone in `y`: for fixed `x`,
//! `y <= y'` implies `V(x, y) <= V(x, y')`. Monotonicity is what lets the
//! online procedures evaluate the score at the decision threshold `c_t`
//! instead of at the unknown response, while keeping p-values superuniform
//! under the null `Y <= c_t`.
//!
//! Two concrete scores are provided on top of a fitted predictor `mu(x)`:
//!
//! - clipped: `V(x, y) = M * 1{y > cutoff} - mu(x)` with `M >= 0`
//!   (strict inequality in the indicator);
//! - residual: `V(x, y) = y - mu(x)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default clipping constant `M`.
pub const DEFAULT_CLIP_CONSTANT: f64 = 1000.0;

/// A fitted model producing a scalar prediction per feature vector.
///
/// Implementations must reject feature vectors whose length differs from
/// `n_features`. For classifiers the prediction is the estimated
/// positive-class probability in `[0, 1]`.
pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<f64>;
}

/// A fitted model producing a vector prediction per feature vector.
///
/// Used by the multivariate selection path, where the response is a vector
/// and the target is a box region.
pub trait VectorPredictor: Send + Sync {
    fn n_features(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn predict_vector(&self, x: &[f64]) -> Result<Vec<f64>>;
}

pub(crate) fn check_feature_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::invalid(format!(
            "feature vector has length {got}, expected {expected}"
        )));
    }
    Ok(())
}

/// Clipped score `M * 1{y > cutoff} - mu(x)`.
///
/// `constant` (`M`) must be non-negative; `M = 0` degenerates to
/// `-mu(x)`, constant in `y` and therefore still weakly monotone.
pub fn score_clip(
    predictor: &dyn Predictor,
    x: &[f64],
    y: f64,
    constant: f64,
    cutoff: f64,
) -> Result<f64> {
    if constant.is_nan() || constant < 0.0 {
        return Err(Error::invalid(format!(
            "clip constant must be non-negative, got {constant}"
        )));
    }
    let mu = predictor.predict(x)?;
    let indicator = if y > cutoff { constant } else { 0.0 };
    Ok(indicator - mu)
}

/// Residual score `y - mu(x)`.
pub fn score_res(predictor: &dyn Predictor, x: &[f64], y: f64) -> Result<f64> {
    Ok(y - predictor.predict(x)?)
}

/// User-supplied score callable `(x, y) -> V`.
pub type CustomScore = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// A monotone-in-`y` nonconformity score bound to its parameters.
#[derive(Clone)]
pub enum ScoreFunction {
    Clip {
        predictor: Arc<dyn Predictor>,
        constant: f64,
        cutoff: f64,
    },
    Res {
        predictor: Arc<dyn Predictor>,
    },
    /// Arbitrary user-supplied score; the monotonicity contract is the
    /// caller's responsibility (see [`check_monotone`]).
    Custom(CustomScore),
}

impl fmt::Debug for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreFunction::Clip {
                constant, cutoff, ..
            } => f
                .debug_struct("Clip")
                .field("constant", constant)
                .field("cutoff", cutoff)
                .finish_non_exhaustive(),
            ScoreFunction::Res { .. } => f.debug_struct("Res").finish_non_exhaustive(),
            ScoreFunction::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ScoreFunction {
    /// Clipped score with the default constant and a zero cutoff.
    pub fn clip(predictor: Arc<dyn Predictor>) -> Self {
        ScoreFunction::Clip {
            predictor,
            constant: DEFAULT_CLIP_CONSTANT,
            cutoff: 0.0,
        }
    }

    pub fn clip_with(predictor: Arc<dyn Predictor>, constant: f64, cutoff: f64) -> Result<Self> {
        if constant.is_nan() || constant < 0.0 {
            return Err(Error::invalid(format!(
                "clip constant must be non-negative, got {constant}"
            )));
        }
        if !cutoff.is_finite() {
            return Err(Error::invalid(format!(
                "clip cutoff must be finite, got {cutoff}"
            )));
        }
        Ok(ScoreFunction::Clip {
            predictor,
            constant,
            cutoff,
        })
    }

    pub fn res(predictor: Arc<dyn Predictor>) -> Self {
        ScoreFunction::Res { predictor }
    }

    pub fn custom(f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        ScoreFunction::Custom(Arc::new(f))
    }

    /// Evaluates `V(x, y)`.
    pub fn score(&self, x: &[f64], y: f64) -> Result<f64> {
        match self {
            ScoreFunction::Clip {
                predictor,
                constant,
                cutoff,
            } => score_clip(predictor.as_ref(), x, y, *constant, *cutoff),
            ScoreFunction::Res { predictor } => score_res(predictor.as_ref(), x, y),
            ScoreFunction::Custom(f) => Ok(f(x, y)),
        }
    }
}

/// Checks `V(x, y_i) <= V(x, y_{i+1})` along an ascending grid of `y`
/// values. Returns `false` at the first violation.
pub fn check_monotone(sf: &ScoreFunction, x: &[f64], y_grid: &[f64]) -> Result<bool> {
    let mut prev: Option<f64> = None;
    for &y in y_grid {
        let v = sf.score(x, y)?;
        if let Some(pv) = prev {
            if pv > v {
                return Ok(false);
            }
        }
        prev = Some(v);
    }
    Ok(true)
}

// ---------------------------------------------------------------- tests --
