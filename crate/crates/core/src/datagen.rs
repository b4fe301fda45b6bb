//! Synthetic data generators and CSV ingestion.
//!
//! Two scalar-response simulation settings over `x ~ Uniform[-1,1]^20`
//! with `y = mu(x) + sigma * eps`, `eps ~ N(0,1)`:
//!
//! ```text
//! setting 1:  mu(x) = 4 x1 1{x2 > 0} max(0.5, x3) + 4 x1 1{x2 <= 0} min(-0.5, x3)
//! setting 2:  mu(x) = 5 x1 x2 + exp(x4 - 1)
//! ```
//!
//! plus a bivariate-response generator for region-valued selection. The
//! subscripts above are 1-based, so `x1` is `x[0]`.
//!
//! Generated test points are [`StreamPoint`]s whose true response is
//! private; selection code receives a [`Candidate`] view, a type that has
//! no response field at all, so hidden truths cannot flow into the
//! selection path. Evaluation code asks for the truth explicitly via
//! [`StreamPoint::y_true`].
//!
//! Determinism: each point consumes a fixed number of RNG draws (the
//! covariates in index order, then the noise), so streams are
//! bit-reproducible under a fixed seed and generator.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Dataset, MultiDataset};

/// Covariate dimension of the synthetic settings.
pub const SIM_DIM: usize = 20;

/// Which simulation mean function to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SettingId {
    One,
    Two,
}

/// A scalar-response simulation configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSetting {
    setting: SettingId,
    sigma: f64,
}

impl SimSetting {
    /// `sigma` is the noise standard deviation; zero is allowed and yields
    /// the noiseless `y = mu(x)`.
    pub fn new(setting: SettingId, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self { setting, sigma })
    }

    pub fn setting(&self) -> SettingId {
        self.setting
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mu(&self, x: &[f64]) -> Result<f64> {
        match self.setting {
            SettingId::One => mu_setting1(x),
            SettingId::Two => mu_setting2(x),
        }
    }
}

fn check_dim(x: &[f64]) -> Result<()> {
    if x.len() != SIM_DIM {
        return Err(Error::invalid(format!(
            "expected {SIM_DIM} covariates, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Setting-1 mean: `4 x1 1{x2 > 0} max(0.5, x3) + 4 x1 1{x2 <= 0} min(-0.5, x3)`.
pub fn mu_setting1(x: &[f64]) -> Result<f64> {
    check_dim(x)?;
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    Ok(if x2 > 0.0 {
        4.0 * x1 * x3.max(0.5)
    } else {
        4.0 * x1 * x3.min(-0.5)
    })
}

/// Setting-2 mean: `5 x1 x2 + exp(x4 - 1)`.
pub fn mu_setting2(x: &[f64]) -> Result<f64> {
    check_dim(x)?;
    Ok(5.0 * x[0] * x[1] + (x[3] - 1.0).exp())
}

/// Bivariate mean used by the region-valued experiments. Each component
/// sits near 3.5 so that with unit noise all but a small fraction
/// (about 0.3%) of responses land in the positive quadrant: the conformal
/// p-value of a candidate is bounded below by roughly the calibration
/// null fraction, so the null rate must stay well under the per-step
/// selection budget for any selection to be possible.
pub fn mu_bivariate(x: &[f64]) -> Result<[f64; 2]> {
    check_dim(x)?;
    Ok([3.5 + x[0] + 0.5 * x[2], 3.5 + x[1] + 0.5 * x[3]])
}

/// One labeled point of a scalar-response stream. The response is private
/// by construction: selection code works with [`Candidate`] views.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamPoint {
    x: Vec<f64>,
    threshold: f64,
    y_true: f64,
}

impl StreamPoint {
    pub fn new(x: Vec<f64>, threshold: f64, y_true: f64) -> Self {
        Self {
            x,
            threshold,
            y_true,
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// The hidden response, for model fitting, calibration scoring, and
    /// evaluation only.
    pub fn y_true(&self) -> f64 {
        self.y_true
    }

    /// What the selection rule is allowed to see at decision time.
    pub fn candidate(&self) -> Candidate<'_> {
        Candidate {
            x: &self.x,
            threshold: self.threshold,
        }
    }

    /// True label for evaluation: is this point worth selecting?
    pub fn is_alt(&self) -> bool {
        self.y_true > self.threshold
    }
}

/// The response-free view of a stream point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<'a> {
    pub x: &'a [f64],
    pub threshold: f64,
}

/// Draws `n` i.i.d. points with the shared threshold `c`. Consumes
/// `n * (SIM_DIM + 1)` draws from `rng`.
pub fn generate<R: Rng + ?Sized>(
    setting: &SimSetting,
    n: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<Vec<StreamPoint>> {
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..SIM_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eps: f64 = rng.sample(StandardNormal);
            let y = setting.mu(&x)? + setting.sigma * eps;
            Ok(StreamPoint::new(x, threshold, y))
        })
        .collect()
}

/// A labeled point with a bivariate response, private like [`StreamPoint`].
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStreamPoint {
    x: Vec<f64>,
    y_true: Vec<f64>,
}

impl MultiStreamPoint {
    pub fn new(x: Vec<f64>, y_true: Vec<f64>) -> Self {
        Self { x, y_true }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y_true(&self) -> &[f64] {
        &self.y_true
    }
}

/// Draws `n` i.i.d. bivariate-response points. Consumes
/// `n * (SIM_DIM + 2)` draws from `rng`.
pub fn generate_bivariate<R: Rng + ?Sized>(
    sigma: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<MultiStreamPoint>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..SIM_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mu = mu_bivariate(&x)?;
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            let y = vec![mu[0] + sigma * e1, mu[1] + sigma * e2];
            Ok(MultiStreamPoint::new(x, y))
        })
        .collect()
}

/// Labeled dataset view of a slice of points (training / calibration use).
pub fn to_dataset(points: &[StreamPoint]) -> Result<Dataset> {
    let rows: Vec<Vec<f64>> = points.iter().map(|p| p.x.clone()).collect();
    let targets: Vec<f64> = points.iter().map(|p| p.y_true).collect();
    Dataset::from_rows(&rows, &targets)
}

/// Labeled multi-response dataset view of a slice of points.
pub fn to_multi_dataset(points: &[MultiStreamPoint]) -> Result<MultiDataset> {
    let n_outputs = points.first().map_or(1, |p| p.y_true.len());
    let features: Vec<f64> = points.iter().flat_map(|p| p.x.iter().copied()).collect();
    let n_cols = points.first().map_or(0, |p| p.x.len());
    let targets: Vec<f64> = points
        .iter()
        .flat_map(|p| p.y_true.iter().copied())
        .collect();
    MultiDataset::new(features, n_cols, targets, n_outputs)
}

// ------------------------------------------------------------------ csv --

/// Declares how to read a CSV file: which column is the target, which
/// columns are features (default: all others), and an optional per-row
/// threshold column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub target: String,
    pub features: Option<Vec<String>>,
    pub threshold: Option<String>,
}

impl CsvSchema {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            features: None,
            threshold: None,
        }
    }
}

/// A parsed CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
    pub thresholds: Option<Vec<f64>>,
}

/// Loads a headered CSV file ("." decimal separator, UTF-8).
///
/// Data rows are numbered from 1 in error messages. A non-numeric cell
/// fails fast naming its row; rows with missing (empty) cells are all
/// collected and reported together; a header-only file is an error.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<CsvData> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::CsvSchema {
            path: display.clone(),
            message: e.to_string(),
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::CsvSchema {
            path: display.clone(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();

    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::CsvSchema {
            path: display.clone(),
            message: format!("column '{name}' not found; header has {headers:?}"),
        })
    };

    let target_idx = col(&schema.target)?;
    let threshold_idx = schema.threshold.as_deref().map(col).transpose()?;
    let feature_idx: Vec<usize> = match &schema.features {
        Some(names) => {
            if let Some(dup) = names.iter().find(|n| **n == schema.target) {
                return Err(Error::CsvSchema {
                    path: display,
                    message: format!("'{dup}' is both the target and a feature"),
                });
            }
            names.iter().map(|n| col(n)).collect::<Result<_>>()?
        }
        None => (0..headers.len())
            .filter(|i| *i != target_idx && Some(*i) != threshold_idx)
            .collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::CsvSchema {
            path: display,
            message: "no feature columns left after removing target/threshold".into(),
        });
    }
    let feature_names: Vec<String> = feature_idx.iter().map(|&i| headers[i].clone()).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut thresholds: Vec<f64> = Vec::new();
    let mut missing_rows: Vec<usize> = Vec::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 1; // 1-based data row
        let record = record.map_err(|e| Error::CsvParse {
            path: display.clone(),
            row,
            message: e.to_string(),
        })?;

        let mut wanted: Vec<usize> = feature_idx.clone();
        wanted.push(target_idx);
        wanted.extend(threshold_idx);
        if wanted.iter().any(|&c| record.get(c).is_none_or(str::is_empty)) {
            missing_rows.push(row);
            continue;
        }

        let parse = |c: usize| -> Result<f64> {
            let cell = record.get(c).unwrap();
            cell.parse::<f64>().map_err(|_| Error::CsvParse {
                path: display.clone(),
                row,
                message: format!("cannot parse '{cell}' in column '{}' as a number", headers[c]),
            })
        };

        rows.push(feature_idx.iter().map(|&c| parse(c)).collect::<Result<_>>()?);
        targets.push(parse(target_idx)?);
        if let Some(c) = threshold_idx {
            thresholds.push(parse(c)?);
        }
    }

    if !missing_rows.is_empty() {
        let listed: Vec<String> = missing_rows.iter().map(usize::to_string).collect();
        return Err(Error::CsvParse {
            path: display,
            row: missing_rows[0],
            message: format!("missing values in data rows {}", listed.join(", ")),
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(format!("{display} has no data rows")));
    }

    Ok(CsvData {
        dataset: Dataset::from_rows(&rows, &targets)?,
        feature_names,
        thresholds: threshold_idx.map(|_| thresholds),
    })
}

// ---------------------------------------------------------------- tests --
