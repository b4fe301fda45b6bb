//! Experiment runner: executes resolved experiments replicate by replicate
//! and writes summary files.
//!
//! # Determinism
//!
//! Replicate `i` of an experiment with base seed `s` uses a ChaCha8 stream
//! seeded with `s.wrapping_add(i)`. Each replicate draws, in order: the
//! data phase (train, then calibration, then test points; for CSV sources
//! one row shuffle), then exactly one tie-break uniform per test point.
//! Model fitting consumes no randomness. Two runs that share a base seed
//! and data parameters therefore stream identical points and identical
//! tie-breaks regardless of method or score, so methods can be compared
//! pairwise. Replicates run in parallel but collect in index order, and all
//! output files are free of timestamps, so a rerun is byte-identical.
//!
//! # Blindness of the selection path
//!
//! The streaming loop sees only the candidate features and the threshold;
//! true responses are folded into [`TruthLabels`] before the stream starts
//! and touched again only when scoring a finished trajectory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{
    resolve, DataSource, ExperimentConfig, Method, ModelSettings, ResolvedExperiment,
    ResolvedRegion, ScoreKind, SettingKind,
};
use crate::datagen::{
    generate, generate_bivariate, load_csv, to_dataset, to_multi_dataset, CsvData, SimSetting,
};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, fdp, power, reject_to_accept, CheckpointSummary, RunResult, SummaryRow,
    TruthLabels,
};
use crate::models::{fit_boosted_trees, fit_logistic, fit_multi_output_boosted_trees, Dataset};
use crate::multivariate::{
    mocs_arc_step, regional_calibration_scores, RegionalScoreFunction,
};
use crate::procedures::{
    GammaSequence, OnlineBhState, OnlineBonferroniState, RepeatedBhState, SelectionTrajectory,
    TrajectoryStep,
};
use crate::pvalues::{conformal_p, CalibrationScores};
use crate::scores::{score_clip, score_res, Predictor};

/// Seed for replicate `replicate` of a run with `base_seed`.
pub fn replicate_seed(base_seed: u64, replicate: usize) -> u64 {
    base_seed.wrapping_add(replicate as u64)
}

/// Replicate results plus their aggregation for one resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub exp: ResolvedExperiment,
    /// Per-replicate results, in replicate order.
    pub results: Vec<RunResult>,
    /// One summary per configured checkpoint.
    pub summaries: Vec<CheckpointSummary>,
}

/// Resolves a configuration and runs every grid point.
pub fn run_all(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Vec<ExperimentOutput>> {
    resolve(cfg, base_dir)?.iter().map(run_resolved).collect()
}

/// Runs all replicates of one experiment in parallel and aggregates them.
pub fn run_resolved(exp: &ResolvedExperiment) -> Result<ExperimentOutput> {
    let csv = match &exp.data {
        DataSource::Csv {
            path,
            schema,
            train,
            cal,
            test,
            ..
        } => {
            let data = load_csv(path, schema)?;
            let need = train + cal + test;
            if need > data.dataset.n_rows() {
                return Err(Error::invalid(format!(
                    "{} has {} data rows but the splits need {need}",
                    path.display(),
                    data.dataset.n_rows()
                )));
            }
            Some(data)
        }
        DataSource::Simulation { .. } => None,
    };
    log::info!(
        "running {}: {} replicate(s) of {} steps",
        exp.id,
        exp.replicates,
        exp.data.test_size()
    );
    let results: Vec<RunResult> = (0..exp.replicates)
        .into_par_iter()
        .map(|rep| run_replicate(exp, csv.as_ref(), rep))
        .collect::<Result<Vec<_>>>()?;
    let summaries = aggregate(&results, &exp.checkpoints)?;
    Ok(ExperimentOutput {
        exp: exp.clone(),
        results,
        summaries,
    })
}

/// Runs a single replicate.
pub fn run_replicate(
    exp: &ResolvedExperiment,
    csv: Option<&CsvData>,
    replicate: usize,
) -> Result<RunResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(exp.base_seed, replicate));
    match &exp.data {
        DataSource::Simulation {
            setting: SettingKind::Bivariate,
            sigma,
            train,
            cal,
            test,
            ..
        } => run_bivariate_replicate(exp, *sigma, *train, *cal, *test, &mut rng),
        DataSource::Simulation {
            setting,
            sigma,
            threshold,
            train,
            cal,
            test,
        } => {
            // Validation guarantees a univariate setting here.
            let id = setting
                .univariate()
                .ok_or_else(|| Error::invalid("bivariate setting in univariate path"))?;
            let sim = SimSetting::new(id, *sigma)?;
            let train_pts = generate(&sim, *train, *threshold, &mut rng)?;
            let cal_pts = generate(&sim, *cal, *threshold, &mut rng)?;
            let test_pts = generate(&sim, *test, *threshold, &mut rng)?;

            let inputs = UnivariateInputs {
                train: to_dataset(&train_pts)?,
                cal: cal_pts
                    .iter()
                    .map(|p| (p.x().to_vec(), p.y_true(), p.threshold()))
                    .collect(),
                test: test_pts
                    .iter()
                    .map(|p| (p.x().to_vec(), p.threshold()))
                    .collect(),
                truths: TruthLabels::new(test_pts.iter().map(|p| p.is_alt()).collect()),
            };
            run_univariate_stream(exp, inputs, &mut rng)
        }
        DataSource::Csv {
            path,
            threshold,
            train,
            cal,
            test,
            ..
        } => {
            let data = csv.ok_or_else(|| {
                Error::invalid(format!("csv {} was not preloaded", path.display()))
            })?;
            let mut indices: Vec<usize> = (0..data.dataset.n_rows()).collect();
            indices.shuffle(&mut rng);

            let threshold_of = |i: usize| -> Result<f64> {
                match (&data.thresholds, threshold) {
                    (Some(col), _) => Ok(col[i]),
                    (None, Some(c)) => Ok(*c),
                    (None, None) => Err(Error::invalid("csv source without any threshold")),
                }
            };
            let train_idx = &indices[..*train];
            let cal_idx = &indices[*train..train + cal];
            let test_idx = &indices[train + cal..train + cal + test];

            let mut cal_rows = Vec::with_capacity(*cal);
            for &i in cal_idx {
                cal_rows.push((
                    data.dataset.row(i).to_vec(),
                    data.dataset.targets()[i],
                    threshold_of(i)?,
                ));
            }
            let mut test_rows = Vec::with_capacity(*test);
            let mut alt = Vec::with_capacity(*test);
            for &i in test_idx {
                let c = threshold_of(i)?;
                test_rows.push((data.dataset.row(i).to_vec(), c));
                alt.push(data.dataset.targets()[i] > c);
            }
            let inputs = UnivariateInputs {
                train: data.dataset.subset(train_idx)?,
                cal: cal_rows,
                test: test_rows,
                truths: TruthLabels::new(alt),
            };
            run_univariate_stream(exp, inputs, &mut rng)
        }
    }
}

/// Per-replicate inputs for the univariate procedures: a labeled training
/// set, labeled calibration rows `(x, y, threshold)` and blind test rows
/// `(x, threshold)`.
struct UnivariateInputs {
    train: Dataset,
    cal: Vec<(Vec<f64>, f64, f64)>,
    test: Vec<(Vec<f64>, f64)>,
    truths: TruthLabels,
}

fn fit_predictor(exp: &ResolvedExperiment, train: &Dataset) -> Result<Box<dyn Predictor>> {
    match &exp.model {
        ModelSettings::BoostedTrees(params) => Ok(Box::new(fit_boosted_trees(train, params)?)),
        ModelSettings::Logistic { l2 } => Ok(Box::new(fit_logistic(train, *l2)?)),
    }
}

/// The configured score evaluated at a response value `y` (calibration
/// uses the observed response, the stream substitutes the threshold).
fn univariate_score(
    exp: &ResolvedExperiment,
    model: &dyn Predictor,
    x: &[f64],
    y: f64,
    row_threshold: f64,
) -> Result<f64> {
    match exp.score {
        ScoreKind::Clip => {
            let cutoff = exp.clip_cutoff.unwrap_or(row_threshold);
            score_clip(model, x, y, exp.clip_constant, cutoff)
        }
        ScoreKind::Res => score_res(model, x, y),
        ScoreKind::Regional => Err(Error::invalid(
            "the regional score has no univariate evaluation",
        )),
    }
}

fn run_univariate_stream<R: Rng + ?Sized>(
    exp: &ResolvedExperiment,
    inputs: UnivariateInputs,
    rng: &mut R,
) -> Result<RunResult> {
    let model = fit_predictor(exp, &inputs.train)?;
    let cal_scores: Vec<f64> = inputs
        .cal
        .iter()
        .map(|(x, y, c)| univariate_score(exp, model.as_ref(), x, *y, *c))
        .collect::<Result<_>>()?;
    let cal = CalibrationScores::new(&cal_scores)?;

    let mut driver = ProcedureDriver::new(exp)?;
    let mut trajectory = SelectionTrajectory::default();
    for (i, (x, c)) in inputs.test.iter().enumerate() {
        let t = i + 1;
        let u: f64 = rng.random();
        let v_hat = univariate_score(exp, model.as_ref(), x, *c, *c)?;
        let p = conformal_p(&cal, v_hat, u)?.p;
        trajectory.push(driver.step(t, p)?);
    }
    finish_run(trajectory, &inputs.truths)
}

fn run_bivariate_replicate<R: Rng + ?Sized>(
    exp: &ResolvedExperiment,
    sigma: f64,
    train: usize,
    cal: usize,
    test: usize,
    rng: &mut R,
) -> Result<RunResult> {
    let ResolvedRegion { region, margin } = exp
        .region
        .as_ref()
        .ok_or_else(|| Error::invalid("mocs_arc without a region"))?;
    let params = match &exp.model {
        ModelSettings::BoostedTrees(params) => params,
        ModelSettings::Logistic { .. } => {
            return Err(Error::invalid("the bivariate setting needs boosted trees"))
        }
    };

    let train_pts = generate_bivariate(sigma, train, rng)?;
    let cal_pts = generate_bivariate(sigma, cal, rng)?;
    let test_pts = generate_bivariate(sigma, test, rng)?;

    let model = fit_multi_output_boosted_trees(&to_multi_dataset(&train_pts)?, params)?;
    let sf = RegionalScoreFunction::with_margin(Arc::new(model), *margin)?;
    let cal_xs: Vec<Vec<f64>> = cal_pts.iter().map(|p| p.x().to_vec()).collect();
    let cal_ys: Vec<Vec<f64>> = cal_pts.iter().map(|p| p.y_true().to_vec()).collect();
    let cal_scores = regional_calibration_scores(&sf, region, &cal_xs, &cal_ys)?;

    let mut truths = TruthLabels::new(Vec::new());
    for p in &test_pts {
        truths.push(region.contains(p.y_true())?);
    }

    let gamma = GammaSequence::new(exp.r)?;
    let mut state = OnlineBhState::new(exp.q, gamma)?;
    let mut trajectory = SelectionTrajectory::default();
    let mut cum = 0;
    for (i, pt) in test_pts.iter().enumerate() {
        let t = i + 1;
        let u: f64 = rng.random();
        let step = mocs_arc_step(&mut state, &cal_scores, &sf, region, pt.x(), u)?;
        cum += step.newly_selected.len();
        trajectory.push(TrajectoryStep {
            t,
            p: step.record.p,
            gamma: gamma.gamma(t)?,
            k_star: state.k_star(),
            newly_selected: step.newly_selected,
            removed: Vec::new(),
            cum_selected: cum,
        });
    }
    finish_run(trajectory, &truths)
}

/// Uniform stepping interface over the selection procedures. The
/// trajectory's `k_star` column is the BH rank for ocs_arc and
/// repeated_cs and 0 for the Bonferroni baseline, and `gamma` is 0 for
/// repeated_cs, which spends no budget sequence.
enum ProcedureDriver {
    OnlineBh(OnlineBhState),
    Bonferroni(OnlineBonferroniState),
    Repeated(RepeatedBhState, BTreeSet<usize>),
}

impl ProcedureDriver {
    fn new(exp: &ResolvedExperiment) -> Result<Self> {
        match exp.method {
            Method::OcsArc | Method::MocsArc => Ok(ProcedureDriver::OnlineBh(OnlineBhState::new(
                exp.q,
                GammaSequence::new(exp.r)?,
            )?)),
            Method::Ob => Ok(ProcedureDriver::Bonferroni(OnlineBonferroniState::new(
                exp.q,
                GammaSequence::new(exp.r)?,
            )?)),
            Method::RepeatedCs => Ok(ProcedureDriver::Repeated(
                RepeatedBhState::new(exp.q)?,
                BTreeSet::new(),
            )),
        }
    }

    fn step(&mut self, t: usize, p: f64) -> Result<TrajectoryStep> {
        match self {
            ProcedureDriver::OnlineBh(state) => {
                let newly = state.step(p)?;
                Ok(TrajectoryStep {
                    t,
                    p,
                    gamma: state.gamma().gamma(t)?,
                    k_star: state.k_star(),
                    newly_selected: newly,
                    removed: Vec::new(),
                    cum_selected: state.selected().len(),
                })
            }
            ProcedureDriver::Bonferroni(state) => {
                let gamma = state.gamma().gamma(t)?;
                let newly = state.step(p)?;
                Ok(TrajectoryStep {
                    t,
                    p,
                    gamma,
                    k_star: 0,
                    newly_selected: newly,
                    removed: Vec::new(),
                    cum_selected: state.selected().len(),
                })
            }
            ProcedureDriver::Repeated(state, prev) => {
                let current = state.step(p)?.clone();
                let newly = current.difference(prev).copied().collect();
                let removed = prev.difference(&current).copied().collect();
                let cum = current.len();
                *prev = current;
                Ok(TrajectoryStep {
                    t,
                    p,
                    gamma: 0.0,
                    k_star: state.k_star(),
                    newly_selected: newly,
                    removed,
                    cum_selected: cum,
                })
            }
        }
    }
}

/// Scores a finished trajectory against the truth labels.
fn finish_run(trajectory: SelectionTrajectory, truths: &TruthLabels) -> Result<RunResult> {
    let sets = trajectory.selection_sets();
    let mut fdp_at = Vec::with_capacity(sets.len());
    let mut power_at = Vec::with_capacity(sets.len());
    for set in &sets {
        fdp_at.push(fdp(set, truths)?);
        power_at.push(power(set, truths)?);
    }
    Ok(RunResult {
        fdp_at,
        power_at,
        reject_to_accept: reject_to_accept(&sets),
        trajectory,
    })
}

// -------------------------------------------------------------- outputs --

/// Flattens experiment outputs into summary CSV rows.
pub fn summary_rows(outputs: &[ExperimentOutput]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for output in outputs {
        for summary in &output.summaries {
            rows.push(SummaryRow {
                experiment_id: output.exp.id.clone(),
                method: output.exp.method.to_string(),
                score: output.exp.score.to_string(),
                summary: summary.clone(),
            });
        }
    }
    rows
}

fn format_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        v.to_string()
    }
}

fn manifest_json(config_echo: &str, outputs: &[ExperimentOutput], files: &[String]) -> String {
    let experiments: Vec<serde_json::Value> = outputs
        .iter()
        .map(|o| {
            let e = &o.exp;
            let seeds: Vec<u64> = (0..e.replicates)
                .map(|i| replicate_seed(e.base_seed, i))
                .collect();
            let mut v = serde_json::json!({
                "id": e.id,
                "method": e.method.to_string(),
                "score": e.score.to_string(),
                "q": e.q,
                "r": e.r,
                "checkpoints": e.checkpoints,
                "replicates": e.replicates,
                "base_seed": e.base_seed,
                "replicate_seeds": seeds,
                "cal_size": e.data.cal_size(),
                "test_size": e.data.test_size(),
            });
            if let Some(region) = &e.region {
                v["region"] = serde_json::json!({
                    "lower": region.region.lower().iter().copied().map(format_bound).collect::<Vec<_>>(),
                    "upper": region.region.upper().iter().copied().map(format_bound).collect::<Vec<_>>(),
                    "margin": region.margin,
                });
            }
            v
        })
        .collect();
    let manifest = serde_json::json!({
        "tool": "ocs-arc",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config_echo,
        "experiments": experiments,
        "outputs": files,
    });
    // Keys serialize sorted and nothing here depends on the clock, so a
    // rerun writes the identical manifest.
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest is valid json");
    text.push('\n');
    text
}

/// Writes `summary.csv`, optional per-replicate trajectory CSVs and
/// `manifest.json` under `out_dir`; returns all written paths.
pub fn write_outputs(
    out_dir: &Path,
    config_echo: &str,
    outputs: &[ExperimentOutput],
    write_trajectories: bool,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut relative = Vec::new();

    let summary_path = out_dir.join("summary.csv");
    let file = fs::File::create(&summary_path)?;
    crate::metrics::write_summary_csv(&summary_rows(outputs), file)?;
    relative.push("summary.csv".to_string());

    if write_trajectories {
        for output in outputs {
            let dir = out_dir.join("trajectories").join(&output.exp.id);
            fs::create_dir_all(&dir)?;
            for (rep, result) in output.results.iter().enumerate() {
                let name = format!("rep{rep:03}.csv");
                let file = fs::File::create(dir.join(&name))?;
                result.trajectory.write_csv(file)?;
                relative.push(format!("trajectories/{}/{name}", output.exp.id));
            }
        }
    }

    let manifest = manifest_json(config_echo, outputs, &relative);
    fs::write(out_dir.join("manifest.json"), manifest)?;
    relative.push("manifest.json".to_string());

    Ok(relative.into_iter().map(|r| out_dir.join(r)).collect())
}

// ---------------------------------------------------------------- tests --
