//! Evaluation metrics and replicate aggregation.
//!
//! Truth labels mark each stream index as null (`Y_t <= c_t`) or non-null
//! (`Y_t > c_t`); the multivariate path labels by region membership. All
//! index sets use 1-based timesteps, matching the procedures module.
//!
//! - FDP: `|selected ∩ nulls| / |selected|`, with `0/0 := 0`.
//! - Power: `|selected ∩ non-nulls| / #non-nulls`, with `0/0 := 0`.
//! - Reject-to-accept count: `sum_t |R_{t-1} \ R_t|`, the number of
//!   withdrawn decisions along a trajectory (zero iff the trajectory is
//!   nested).

use std::collections::BTreeSet;
use std::io::Write;

use crate::error::{Error, Result};
use crate::procedures::{csv_io, SelectionTrajectory};

/// Null / non-null labels for stream indices `1..=len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TruthLabels {
    alt: Vec<bool>,
}

impl TruthLabels {
    /// `alt[i]` is true when index `i + 1` is non-null.
    pub fn new(alt: Vec<bool>) -> Self {
        Self { alt }
    }

    /// Labels from responses and per-index thresholds (`Y > c` is non-null).
    pub fn from_responses(y: &[f64], thresholds: &[f64]) -> Result<Self> {
        if y.len() != thresholds.len() {
            return Err(Error::invalid(format!(
                "got {} responses but {} thresholds",
                y.len(),
                thresholds.len()
            )));
        }
        Ok(Self {
            alt: y.iter().zip(thresholds).map(|(&yi, &ci)| yi > ci).collect(),
        })
    }

    pub fn push(&mut self, is_alt: bool) {
        self.alt.push(is_alt);
    }

    pub fn len(&self) -> usize {
        self.alt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alt.is_empty()
    }

    /// 1-based lookup.
    pub fn is_alt(&self, index: usize) -> Option<bool> {
        if index == 0 {
            return None;
        }
        self.alt.get(index - 1).copied()
    }

    pub fn n_alt(&self) -> usize {
        self.alt.iter().filter(|&&a| a).count()
    }
}

fn check_labelled(selected: &BTreeSet<usize>, truths: &TruthLabels) -> Result<()> {
    if let Some(&j) = selected.iter().find(|&&j| truths.is_alt(j).is_none()) {
        return Err(Error::invalid(format!(
            "selected index {j} has no truth label (labels cover 1..={})",
            truths.len()
        )));
    }
    Ok(())
}

/// False discovery proportion of a selection set.
pub fn fdp(selected: &BTreeSet<usize>, truths: &TruthLabels) -> Result<f64> {
    check_labelled(selected, truths)?;
    if selected.is_empty() {
        return Ok(0.0);
    }
    let false_hits = selected
        .iter()
        .filter(|&&j| !truths.is_alt(j).unwrap())
        .count();
    Ok(false_hits as f64 / selected.len() as f64)
}

/// Fraction of non-null indices that were selected.
pub fn power(selected: &BTreeSet<usize>, truths: &TruthLabels) -> Result<f64> {
    check_labelled(selected, truths)?;
    let n_alt = truths.n_alt();
    if n_alt == 0 {
        return Ok(0.0);
    }
    let hits = selected
        .iter()
        .filter(|&&j| truths.is_alt(j).unwrap())
        .count();
    Ok(hits as f64 / n_alt as f64)
}

/// Total number of withdrawn decisions along a sequence of selection sets.
pub fn reject_to_accept(sets: &[BTreeSet<usize>]) -> usize {
    let mut total = 0;
    for w in sets.windows(2) {
        total += w[0].difference(&w[1]).count();
    }
    total
}

/// Per-replicate outcome of a selection run over a stream of length `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// `fdp_at[t - 1]` is the FDP of the selection set after step `t`.
    pub fdp_at: Vec<f64>,
    /// `power_at[t - 1]` is the power after step `t`.
    pub power_at: Vec<f64>,
    /// Withdrawn-decision count over the whole run.
    pub reject_to_accept: usize,
    pub trajectory: SelectionTrajectory,
}

/// Cross-replicate summary at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSummary {
    pub t: usize,
    pub mean_fdp: f64,
    pub std_fdp: f64,
    pub se_fdp: f64,
    pub mean_power: f64,
    pub std_power: f64,
    pub se_power: f64,
    pub mean_r2a: f64,
    /// False when only one replicate was aggregated; the std/se fields are
    /// then reported as 0.
    pub se_defined: bool,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates replicate results at the given checkpoints (mean, sample std
/// with `n - 1`, standard error `std / sqrt(n)`).
pub fn aggregate(results: &[RunResult], checkpoints: &[usize]) -> Result<Vec<CheckpointSummary>> {
    if results.is_empty() {
        return Err(Error::invalid("aggregate requires at least one run"));
    }
    if checkpoints.is_empty() {
        return Err(Error::invalid("aggregate requires at least one checkpoint"));
    }
    for (i, r) in results.iter().enumerate() {
        if r.fdp_at.len() != r.power_at.len() {
            return Err(Error::invalid(format!(
                "run {i} has {} fdp entries but {} power entries",
                r.fdp_at.len(),
                r.power_at.len()
            )));
        }
    }
    let n = results.len() as f64;
    let se_defined = results.len() > 1;
    let r2a: Vec<f64> = results.iter().map(|r| r.reject_to_accept as f64).collect();
    let (mean_r2a, _) = mean_std(&r2a);
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        if t == 0 {
            return Err(Error::invalid("checkpoints are 1-based; got 0"));
        }
        for (i, r) in results.iter().enumerate() {
            if t > r.fdp_at.len() {
                return Err(Error::invalid(format!(
                    "checkpoint {t} exceeds run {i} length {}",
                    r.fdp_at.len()
                )));
            }
        }
        let fdps: Vec<f64> = results.iter().map(|r| r.fdp_at[t - 1]).collect();
        let powers: Vec<f64> = results.iter().map(|r| r.power_at[t - 1]).collect();
        let (mean_fdp, std_fdp) = mean_std(&fdps);
        let (mean_power, std_power) = mean_std(&powers);
        out.push(CheckpointSummary {
            t,
            mean_fdp,
            std_fdp,
            se_fdp: std_fdp / n.sqrt(),
            mean_power,
            std_power,
            se_power: std_power / n.sqrt(),
            mean_r2a,
            se_defined,
        });
    }
    Ok(out)
}

/// One row of the summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment_id: String,
    pub method: String,
    pub score: String,
    pub summary: CheckpointSummary,
}

/// Writes summary rows with columns
/// `experiment_id,method,score,t,mean_fdp,se_fdp,mean_power,se_power,mean_r2a`.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "experiment_id",
        "method",
        "score",
        "t",
        "mean_fdp",
        "se_fdp",
        "mean_power",
        "se_power",
        "mean_r2a",
    ])
    .map_err(csv_io)?;
    for row in rows {
        let s = &row.summary;
        w.write_record([
            row.experiment_id.clone(),
            row.method.clone(),
            row.score.clone(),
            s.t.to_string(),
            s.mean_fdp.to_string(),
            s.se_fdp.to_string(),
            s.mean_power.to_string(),
            s.se_power.to_string(),
            s.mean_r2a.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- tests --
