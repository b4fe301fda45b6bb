//! Experiment configuration.
//!
//! Experiments are described by a TOML file with sections `[experiment]`,
//! `[data]`, `[model]`, `[scoring]` and `[region]`:
//!
//! ```toml
//! [experiment]
//! id = "setting1"
//! method = "ocs_arc"          # ocs_arc | ob | repeated_cs | mocs_arc
//! score = "clip"              # clip | res | regional
//! q = 0.1
//! r = 0.99                   # scalar or list (sensitivity sweep)
//! checkpoints = [100, 200, 300]
//! replicates = 100
//! base_seed = 7
//!
//! [data]
//! source = "simulation"       # simulation | csv
//! setting = 1                 # 1 | 2 | "bivariate"
//! sigma = 1.0                 # scalar or list
//! threshold = 0.0
//! train_size = 500
//! cal_size = 500              # scalar or list (sensitivity sweep)
//! test_size = 300
//! ```
//!
//! Lists for `r`, `cal_size` and `sigma` expand into a cartesian grid of
//! experiments whose ids carry one suffix per swept axis. [`validate_config`]
//! returns diagnostics instead of failing, so a command-line `validate` can
//! report every problem at once; [`resolve`] refuses invalid configs and
//! otherwise produces one [`ResolvedExperiment`] per grid point.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{CsvSchema, SettingId};
use crate::error::{Error, Result};
use crate::models::BoostedTreesParams;
use crate::multivariate::{RegionalScoreFunction, TargetRegion};
use crate::scores::DEFAULT_CLIP_CONSTANT;

/// Checkpoints used when a config does not list any, filtered to the
/// stream length (the final step stands in when none fit).
pub const DEFAULT_CHECKPOINTS: [usize; 3] = [100, 200, 300];

// ---------------------------------------------------------------- tokens --

/// A scalar or a list; lists denote parameter sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            OneOrMany::One(_) => 1,
            OneOrMany::Many(vs) => vs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A region bound: a number, a TOML float literal like `-inf`, or the
/// strings `"inf"` / `"-inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundToken {
    Number(f64),
    Token(String),
}

impl BoundToken {
    /// Numeric value, or `None` for an unrecognized token.
    pub fn to_f64(&self) -> Option<f64> {
        match self {
            BoundToken::Number(v) => Some(*v),
            BoundToken::Token(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
                "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
                _ => None,
            },
        }
    }
}

/// Simulation setting as written in the config: `1`, `2` or `"bivariate"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SettingToken {
    Number(u32),
    Name(String),
}

impl SettingToken {
    pub fn parse(&self) -> Option<SettingKind> {
        match self {
            SettingToken::Number(1) => Some(SettingKind::One),
            SettingToken::Number(2) => Some(SettingKind::Two),
            SettingToken::Number(_) => None,
            SettingToken::Name(s) => match s.trim().to_ascii_lowercase().as_str() {
                "1" => Some(SettingKind::One),
                "2" => Some(SettingKind::Two),
                "bivariate" => Some(SettingKind::Bivariate),
                _ => None,
            },
        }
    }
}

/// Resolved simulation setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SettingKind {
    One,
    Two,
    Bivariate,
}

impl SettingKind {
    /// Univariate setting id, `None` for the bivariate setting.
    pub fn univariate(self) -> Option<SettingId> {
        match self {
            SettingKind::One => Some(SettingId::One),
            SettingKind::Two => Some(SettingId::Two),
            SettingKind::Bivariate => None,
        }
    }
}

impl fmt::Display for SettingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SettingKind::One => write!(f, "1"),
            SettingKind::Two => write!(f, "2"),
            SettingKind::Bivariate => write!(f, "bivariate"),
        }
    }
}

/// Selection procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    OcsArc,
    Ob,
    RepeatedCs,
    MocsArc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::OcsArc => write!(f, "ocs_arc"),
            Method::Ob => write!(f, "ob"),
            Method::RepeatedCs => write!(f, "repeated_cs"),
            Method::MocsArc => write!(f, "mocs_arc"),
        }
    }
}

/// Nonconformity score family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Clip,
    Res,
    Regional,
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreKind::Clip => write!(f, "clip"),
            ScoreKind::Res => write!(f, "res"),
            ScoreKind::Regional => write!(f, "regional"),
        }
    }
}

/// Data source kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Simulation,
    Csv,
}

/// Predictive model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    BoostedTrees,
    Logistic,
}

// -------------------------------------------------------------- sections --

/// `[experiment]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub id: String,
    pub method: Method,
    pub score: ScoreKind,
    pub q: f64,
    #[serde(default = "default_r")]
    pub r: OneOrMany<f64>,
    /// 1-based stream timesteps at which to aggregate; defaults to
    /// [`DEFAULT_CHECKPOINTS`] filtered to the stream length.
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Write per-replicate trajectory CSVs (the CLI flag also enables this).
    #[serde(default)]
    pub trajectories: bool,
    /// Output directory; the CLI `--out` flag overrides it.
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_r() -> OneOrMany<f64> {
    OneOrMany::One(0.99)
}

fn default_replicates() -> usize {
    1
}

/// `[data]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub source: SourceKind,
    #[serde(default)]
    pub setting: Option<SettingToken>,
    #[serde(default)]
    pub sigma: Option<OneOrMany<f64>>,
    /// Shared selection threshold; for CSV sources either this or
    /// `threshold_column` must be given.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default)]
    pub threshold_column: Option<String>,
    pub train_size: usize,
    pub cal_size: OneOrMany<usize>,
    pub test_size: usize,
}

/// `[model]` section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub kind: ModelKind,
    #[serde(default)]
    pub n_trees: Option<usize>,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub min_samples_leaf: Option<usize>,
    /// Ridge penalty, logistic model only.
    #[serde(default)]
    pub l2: Option<f64>,
}

/// `[scoring]` section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringSection {
    #[serde(default)]
    pub clip_constant: Option<f64>,
    /// Indicator cutoff for the clipped score; defaults to the data
    /// threshold (per-row thresholds when a threshold column is used).
    #[serde(default)]
    pub clip_cutoff: Option<f64>,
}

/// `[region]` section (mocs_arc only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub lower: Vec<BoundToken>,
    pub upper: Vec<BoundToken>,
    #[serde(default)]
    pub margin: Option<f64>,
}

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub scoring: ScoringSection,
    #[serde(default)]
    pub region: Option<RegionSection>,
}

/// Parses a configuration from TOML text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Reads and parses a configuration file, returning the raw text alongside
/// (the runner echoes it into the run manifest).
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", path.display()))
    })?;
    let cfg = parse_config(&text)?;
    Ok((cfg, text))
}

// ------------------------------------------------------------ validation --

/// One validation problem: the offending field and the violated constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every constraint and returns all violations; an empty list means
/// the configuration is valid.
pub fn validate_config(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let exp = &cfg.experiment;
    let data = &cfg.data;

    if exp.id.is_empty() {
        out.push(Diagnostic::new("experiment.id", "must be non-empty"));
    } else if !exp
        .id
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    {
        out.push(Diagnostic::new(
            "experiment.id",
            "may only contain letters, digits, '-', '_' and '.' (it names output files)",
        ));
    }

    if !(exp.q.is_finite() && exp.q > 0.0 && exp.q < 1.0) {
        out.push(Diagnostic::new(
            "experiment.q",
            format!("must lie in (0, 1), got {}", exp.q),
        ));
    }
    if exp.r.is_empty() {
        out.push(Diagnostic::new("experiment.r", "sweep list must be non-empty"));
    }
    for r in exp.r.values() {
        if !(r.is_finite() && r > 0.0 && r < 1.0) {
            out.push(Diagnostic::new(
                "experiment.r",
                format!("must lie in (0, 1), got {r}"),
            ));
        }
    }
    if exp.replicates == 0 {
        out.push(Diagnostic::new("experiment.replicates", "must be >= 1"));
    }
    if let Some(cps) = &exp.checkpoints {
        if cps.is_empty() {
            out.push(Diagnostic::new("experiment.checkpoints", "must be non-empty"));
        }
        for &t in cps {
            if t == 0 || t > data.test_size {
                out.push(Diagnostic::new(
                    "experiment.checkpoints",
                    format!("checkpoint {t} outside the stream 1..={}", data.test_size),
                ));
            }
        }
    }

    // Method / score / region pairing.
    let is_mocs = exp.method == Method::MocsArc;
    if is_mocs && exp.score != ScoreKind::Regional {
        out.push(Diagnostic::new(
            "experiment.score",
            "mocs_arc requires the regional score",
        ));
    }
    if !is_mocs && exp.score == ScoreKind::Regional {
        out.push(Diagnostic::new(
            "experiment.score",
            "the regional score is only usable with method mocs_arc",
        ));
    }
    if is_mocs && cfg.region.is_none() {
        out.push(Diagnostic::new(
            "region",
            "method mocs_arc requires a [region] section",
        ));
    }
    if !is_mocs && cfg.region.is_some() {
        out.push(Diagnostic::new(
            "region",
            "[region] is only used by method mocs_arc",
        ));
    }

    let setting = data.setting.as_ref().map(|t| t.parse());
    match data.source {
        SourceKind::Simulation => {
            match &setting {
                None => out.push(Diagnostic::new(
                    "data.setting",
                    "required for simulation sources (1, 2 or \"bivariate\")",
                )),
                Some(None) => out.push(Diagnostic::new(
                    "data.setting",
                    "must be 1, 2 or \"bivariate\"",
                )),
                Some(Some(kind)) => {
                    let bivariate = *kind == SettingKind::Bivariate;
                    if is_mocs && !bivariate {
                        out.push(Diagnostic::new(
                            "data.setting",
                            "method mocs_arc needs the bivariate setting",
                        ));
                    }
                    if !is_mocs && bivariate {
                        out.push(Diagnostic::new(
                            "data.setting",
                            "the bivariate setting is only usable with method mocs_arc",
                        ));
                    }
                }
            }
            for (field, value) in [
                ("data.path", data.path.is_some()),
                ("data.target", data.target.is_some()),
                ("data.features", data.features.is_some()),
                ("data.threshold_column", data.threshold_column.is_some()),
            ] {
                if value {
                    out.push(Diagnostic::new(field, "only valid for csv sources"));
                }
            }
            if let Some(sigma) = &data.sigma {
                if sigma.is_empty() {
                    out.push(Diagnostic::new("data.sigma", "sweep list must be non-empty"));
                }
                for s in sigma.values() {
                    if !(s.is_finite() && s >= 0.0) {
                        out.push(Diagnostic::new(
                            "data.sigma",
                            format!("must be finite and >= 0, got {s}"),
                        ));
                    }
                }
            }
            if let Some(c) = data.threshold {
                if !c.is_finite() {
                    out.push(Diagnostic::new(
                        "data.threshold",
                        format!("must be finite, got {c}"),
                    ));
                }
            }
        }
        SourceKind::Csv => {
            if data.path.is_none() {
                out.push(Diagnostic::new("data.path", "required for csv sources"));
            }
            if data.target.is_none() {
                out.push(Diagnostic::new("data.target", "required for csv sources"));
            }
            if data.setting.is_some() {
                out.push(Diagnostic::new("data.setting", "only valid for simulation sources"));
            }
            if data.sigma.is_some() {
                out.push(Diagnostic::new("data.sigma", "only valid for simulation sources"));
            }
            match (data.threshold, &data.threshold_column) {
                (None, None) => out.push(Diagnostic::new(
                    "data.threshold",
                    "csv sources need either threshold or threshold_column",
                )),
                (Some(_), Some(_)) => out.push(Diagnostic::new(
                    "data.threshold",
                    "threshold and threshold_column are mutually exclusive",
                )),
                (Some(c), None) if !c.is_finite() => out.push(Diagnostic::new(
                    "data.threshold",
                    format!("must be finite, got {c}"),
                )),
                _ => {}
            }
            if let Some(features) = &data.features {
                if features.is_empty() {
                    out.push(Diagnostic::new("data.features", "must be non-empty when given"));
                }
            }
        }
    }

    if data.train_size == 0 {
        out.push(Diagnostic::new("data.train_size", "must be >= 1"));
    }
    if data.test_size == 0 {
        out.push(Diagnostic::new("data.test_size", "must be >= 1"));
    }
    if data.cal_size.is_empty() {
        out.push(Diagnostic::new("data.cal_size", "sweep list must be non-empty"));
    }
    for n in data.cal_size.values() {
        if n == 0 {
            out.push(Diagnostic::new("data.cal_size", "must be >= 1"));
        }
    }

    validate_model(cfg, &mut out);
    validate_scoring(cfg, &mut out);
    if let Some(region) = &cfg.region {
        validate_region(region, &setting.flatten(), &mut out);
    }
    out
}

fn validate_model(cfg: &ExperimentConfig, out: &mut Vec<Diagnostic>) {
    let model = &cfg.model;
    match model.kind {
        ModelKind::BoostedTrees => {
            if model.l2.is_some() {
                out.push(Diagnostic::new("model.l2", "only valid for the logistic model"));
            }
            if model.n_trees == Some(0) {
                out.push(Diagnostic::new("model.n_trees", "must be >= 1"));
            }
            if model.max_depth == Some(0) {
                out.push(Diagnostic::new("model.max_depth", "must be >= 1"));
            }
            if model.min_samples_leaf == Some(0) {
                out.push(Diagnostic::new("model.min_samples_leaf", "must be >= 1"));
            }
            if let Some(lr) = model.learning_rate {
                if !(lr.is_finite() && (0.0..=2.0).contains(&lr)) {
                    out.push(Diagnostic::new(
                        "model.learning_rate",
                        format!("must lie in [0, 2], got {lr}"),
                    ));
                }
            }
        }
        ModelKind::Logistic => {
            for (field, set) in [
                ("model.n_trees", model.n_trees.is_some()),
                ("model.max_depth", model.max_depth.is_some()),
                ("model.learning_rate", model.learning_rate.is_some()),
                ("model.min_samples_leaf", model.min_samples_leaf.is_some()),
            ] {
                if set {
                    out.push(Diagnostic::new(field, "only valid for the boosted_trees model"));
                }
            }
            if let Some(l2) = model.l2 {
                if !(l2.is_finite() && l2 >= 0.0) {
                    out.push(Diagnostic::new(
                        "model.l2",
                        format!("must be finite and >= 0, got {l2}"),
                    ));
                }
            }
            if cfg.data.source != SourceKind::Csv {
                out.push(Diagnostic::new(
                    "model.kind",
                    "the logistic model needs binary targets; use a csv source",
                ));
            }
        }
    }
}

fn validate_scoring(cfg: &ExperimentConfig, out: &mut Vec<Diagnostic>) {
    let scoring = &cfg.scoring;
    if let Some(m) = scoring.clip_constant {
        if !(m.is_finite() && m >= 0.0) {
            out.push(Diagnostic::new(
                "scoring.clip_constant",
                format!("must be finite and >= 0, got {m}"),
            ));
        }
    }
    if let Some(c) = scoring.clip_cutoff {
        if !c.is_finite() {
            out.push(Diagnostic::new(
                "scoring.clip_cutoff",
                format!("must be finite, got {c}"),
            ));
        }
        if cfg.data.threshold_column.is_some() {
            out.push(Diagnostic::new(
                "scoring.clip_cutoff",
                "ambiguous together with data.threshold_column; drop one",
            ));
        }
    }
}

fn validate_region(region: &RegionSection, setting: &Option<SettingKind>, out: &mut Vec<Diagnostic>) {
    if let Some(m) = region.margin {
        if !(m.is_finite() && m >= 0.0) {
            out.push(Diagnostic::new(
                "region.margin",
                format!("must be finite and >= 0, got {m}"),
            ));
        }
    }
    let lower = parse_bounds(&region.lower, "region.lower", out);
    let upper = parse_bounds(&region.upper, "region.upper", out);
    if let (Some(lower), Some(upper)) = (lower, upper) {
        match TargetRegion::new(lower, upper) {
            Err(e) => out.push(Diagnostic::new("region", e.to_string())),
            Ok(r) => {
                if *setting == Some(SettingKind::Bivariate) && r.dim() != 2 {
                    out.push(Diagnostic::new(
                        "region",
                        format!("the bivariate setting needs a 2-dimensional region, got {}", r.dim()),
                    ));
                }
            }
        }
    }
}

fn parse_bounds(tokens: &[BoundToken], field: &str, out: &mut Vec<Diagnostic>) -> Option<Vec<f64>> {
    let mut bounds = Vec::with_capacity(tokens.len());
    let mut ok = true;
    for token in tokens {
        match token.to_f64() {
            Some(v) => bounds.push(v),
            None => {
                out.push(Diagnostic::new(
                    field,
                    format!("unrecognized bound {token:?}; use a number, \"inf\" or \"-inf\""),
                ));
                ok = false;
            }
        }
    }
    ok.then_some(bounds)
}

// ------------------------------------------------------------ resolution --

/// Fully resolved data source with absolute paths and concrete sizes.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Simulation {
        setting: SettingKind,
        sigma: f64,
        threshold: f64,
        train: usize,
        cal: usize,
        test: usize,
    },
    Csv {
        path: PathBuf,
        schema: CsvSchema,
        /// Fixed threshold; `None` when the schema names a threshold column.
        threshold: Option<f64>,
        train: usize,
        cal: usize,
        test: usize,
    },
}

impl DataSource {
    pub fn test_size(&self) -> usize {
        match self {
            DataSource::Simulation { test, .. } | DataSource::Csv { test, .. } => *test,
        }
    }

    pub fn cal_size(&self) -> usize {
        match self {
            DataSource::Simulation { cal, .. } | DataSource::Csv { cal, .. } => *cal,
        }
    }
}

/// Fully resolved model settings.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSettings {
    BoostedTrees(BoostedTreesParams),
    Logistic { l2: f64 },
}

/// Target region plus its score margin.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRegion {
    pub region: TargetRegion,
    pub margin: f64,
}

/// One grid point of a configuration, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedExperiment {
    pub id: String,
    pub method: Method,
    pub score: ScoreKind,
    pub q: f64,
    pub r: f64,
    pub checkpoints: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    pub data: DataSource,
    pub model: ModelSettings,
    pub clip_constant: f64,
    /// Fixed indicator cutoff; `None` means per-row thresholds.
    pub clip_cutoff: Option<f64>,
    pub region: Option<ResolvedRegion>,
}

fn default_checkpoints(test_size: usize) -> Vec<usize> {
    let kept: Vec<usize> = DEFAULT_CHECKPOINTS
        .iter()
        .copied()
        .filter(|&t| t <= test_size)
        .collect();
    if kept.is_empty() {
        vec![test_size]
    } else {
        kept
    }
}

/// Expands a valid configuration into its experiment grid. Sweep axes are
/// `r`, `cal_size` and `sigma`; each axis with more than one value appends
/// an id suffix (`-r0.993`, `-cal2000`, `-sigma0.5`). Relative CSV paths
/// resolve against `base_dir` (normally the config file's directory).
pub fn resolve(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Vec<ResolvedExperiment>> {
    let diagnostics = validate_config(cfg);
    if !diagnostics.is_empty() {
        let joined = diagnostics
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Config(joined));
    }

    let exp = &cfg.experiment;
    let data = &cfg.data;
    let rs = exp.r.values();
    let cals = data.cal_size.values();
    let sigmas = match (&data.sigma, data.source) {
        (Some(s), SourceKind::Simulation) => s.values(),
        (None, SourceKind::Simulation) => vec![1.0],
        (_, SourceKind::Csv) => vec![f64::NAN], // placeholder, unused below
    };

    let model = match cfg.model.kind {
        ModelKind::BoostedTrees => {
            let defaults = BoostedTreesParams::default();
            ModelSettings::BoostedTrees(BoostedTreesParams {
                n_trees: cfg.model.n_trees.unwrap_or(defaults.n_trees),
                max_depth: cfg.model.max_depth.unwrap_or(defaults.max_depth),
                learning_rate: cfg.model.learning_rate.unwrap_or(defaults.learning_rate),
                min_samples_leaf: cfg
                    .model
                    .min_samples_leaf
                    .unwrap_or(defaults.min_samples_leaf),
            })
        }
        ModelKind::Logistic => ModelSettings::Logistic {
            l2: cfg.model.l2.unwrap_or(0.0),
        },
    };

    let region = match &cfg.region {
        None => None,
        Some(section) => {
            let lower: Vec<f64> = section.lower.iter().filter_map(BoundToken::to_f64).collect();
            let upper: Vec<f64> = section.upper.iter().filter_map(BoundToken::to_f64).collect();
            Some(ResolvedRegion {
                region: TargetRegion::new(lower, upper)?,
                margin: section
                    .margin
                    .unwrap_or(RegionalScoreFunction::DEFAULT_MARGIN),
            })
        }
    };

    let checkpoints = exp
        .checkpoints
        .clone()
        .unwrap_or_else(|| default_checkpoints(data.test_size));
    let clip_constant = cfg.scoring.clip_constant.unwrap_or(DEFAULT_CLIP_CONSTANT);

    let mut out = Vec::with_capacity(rs.len() * cals.len() * sigmas.len());
    for &r in &rs {
        for &cal in &cals {
            for &sigma in &sigmas {
                let mut id = exp.id.clone();
                if rs.len() > 1 {
                    id.push_str(&format!("-r{r}"));
                }
                if cals.len() > 1 {
                    id.push_str(&format!("-cal{cal}"));
                }
                if sigmas.len() > 1 {
                    id.push_str(&format!("-sigma{sigma}"));
                }

                let source = match data.source {
                    SourceKind::Simulation => {
                        // Both validated as present and well-formed above.
                        let setting = data.setting.as_ref().and_then(|t| t.parse()).unwrap();
                        DataSource::Simulation {
                            setting,
                            sigma,
                            threshold: data.threshold.unwrap_or(0.0),
                            train: data.train_size,
                            cal,
                            test: data.test_size,
                        }
                    }
                    SourceKind::Csv => {
                        let raw = PathBuf::from(data.path.as_ref().unwrap());
                        let path = if raw.is_relative() {
                            base_dir.join(raw)
                        } else {
                            raw
                        };
                        DataSource::Csv {
                            path,
                            schema: CsvSchema {
                                target: data.target.clone().unwrap(),
                                features: data.features.clone(),
                                threshold: data.threshold_column.clone(),
                            },
                            threshold: data.threshold,
                            train: data.train_size,
                            cal,
                            test: data.test_size,
                        }
                    }
                };

                let clip_cutoff = match (cfg.scoring.clip_cutoff, &source) {
                    (Some(c), _) => Some(c),
                    (None, DataSource::Simulation { threshold, .. }) => Some(*threshold),
                    (None, DataSource::Csv { threshold, .. }) => *threshold,
                };

                out.push(ResolvedExperiment {
                    id,
                    method: exp.method,
                    score: exp.score,
                    q: exp.q,
                    r,
                    checkpoints: checkpoints.clone(),
                    replicates: exp.replicates,
                    base_seed: exp.base_seed,
                    data: source,
                    model: model.clone(),
                    clip_constant,
                    clip_cutoff,
                    region: region.clone(),
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- tests --
