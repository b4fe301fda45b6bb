//! Online conformal candidate selection with irrevocable decisions.
//!
//! Given a calibration set of labelled examples and a stream of unlabelled
//! candidates, the procedures in this crate decide *online* which candidates
//! to select, with two guarantees:
//!
//! 1. decisions are irrevocable: the selection set at time `t` always
//!    contains the selection set at time `t - 1`;
//! 2. the false discovery rate among selected candidates is controlled at a
//!    user-chosen level `q` at every timestep, in finite samples.
//!
//! The building blocks are organised bottom-up:
//!
//! - [`scores`]: nonconformity scores built on top of a fitted predictor;
//! - [`pvalues`]: randomized conformal p-values against a calibration set;
//! - [`procedures`]: the online selection rules (incremental online BH, a
//!   Bonferroni-style baseline, and a non-irrevocable repeated-BH baseline);
//! - [`multivariate`]: selection of vector responses into a box-shaped
//!   target region;
//! - [`models`]: small deterministic regressors (boosted trees, logistic
//!   regression) used as score predictors;
//! - [`datagen`]: synthetic data generators and CSV ingestion;
//! - [`metrics`]: FDP / power / stability metrics and replicate aggregation;
//! - [`config`] and [`runner`]: the experiment harness behind the CLI.

pub mod config;
pub mod datagen;
pub mod error;
pub mod metrics;
pub mod models;
pub mod multivariate;
pub mod procedures;
pub mod pvalues;
pub mod runner;
pub mod scores;

pub use error::{Error, Result};
