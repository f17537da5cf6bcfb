//! TOML experiment configuration.
//!
//! Every table rejects unknown keys. Validation reports the dotted path of the
//! first offending field, e.g. `scenario.fraction`.

use std::path::{Path, PathBuf};

use fedshap_core::schedule::EXACT_SOLVE_CAP;
use fedshap_core::UtilitySpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Wall-clock budget for assessment; the run stops between epochs once it is spent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub assessment: AssessmentConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub compare: CompareConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub clients: usize,
    pub epochs: usize,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Dirichlet concentration of the label-skewed partition.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    #[serde(rename = "fedavg")]
    FedAvg,
    /// Keep the participant subset with the best validation utility (`assessment.utility`).
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_features")]
        features: usize,
        #[serde(default = "default_rows_per_client")]
        rows_per_client: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default = "default_validation_rows")]
        validation_rows: usize,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
        /// Share of rows held out as the server's validation set.
        #[serde(default = "default_validation_fraction")]
        validation_fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    #[default]
    Logistic,
    Mlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = fedshap_core::TrainConfig::default();
        Self {
            local_epochs: d.local_epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
        }
    }
}

impl From<TrainSection> for fedshap_core::TrainConfig {
    fn from(t: TrainSection) -> Self {
        Self {
            local_epochs: t.local_epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Assess every epoch.
    #[default]
    Full,
    OneSided,
    TwoSidedExact,
    TwoSidedLb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentConfig {
    #[serde(default)]
    pub method: Method,
    /// Permutations per epoch for `monte_carlo`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "yes")]
    pub rescale: bool,
    #[serde(default = "default_utility")]
    pub utility: UtilitySpec,
    #[serde(default)]
    pub solver: Solver,
    /// Epoch budget; required unless `solver = "full"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "yes")]
    pub normalize_terms: bool,
}

impl Default for AssessmentConfig {
    fn default() -> Self {
        Self {
            method: Method::Exact,
            samples: default_samples(),
            rescale: true,
            utility: default_utility(),
            solver: Solver::Full,
            k: None,
            gamma: default_gamma(),
            normalize_terms: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    /// Poison the `dishonest` clients during simulation.
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub dishonest: Vec<usize>,
    /// Inclusive epoch range of the attack.
    #[serde(default = "default_window")]
    pub window: [usize; 2],
    #[serde(default = "default_flip")]
    pub flip_probability: f64,
    #[serde(default = "default_hazard")]
    pub hazard: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            dishonest: Vec::new(),
            window: default_window(),
            flip_probability: default_flip(),
            hazard: default_hazard(),
            noise_scale: None,
            clusters: default_clusters(),
        }
    }
}

impl DetectionConfig {
    pub fn window(&self) -> (usize, usize) {
        (self.window[0], self.window[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Client counts of the grid; empty means `scenario.clients`.
    #[serde(default)]
    pub clients: Vec<usize>,
    /// Epoch counts of the grid; empty means `scenario.epochs`.
    #[serde(default)]
    pub epochs: Vec<usize>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: Vec<usize>,
    /// Scheduled variants use `k = max(1, round(ratio · T))`.
    #[serde(default = "default_budget_ratios")]
    pub budget_ratios: Vec<f64>,
    #[serde(default = "default_compare_solvers")]
    pub solvers: Vec<Solver>,
    /// Worker threads; defaults to the number of cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            clients: Vec::new(),
            epochs: Vec::new(),
            mc_samples: default_mc_samples(),
            budget_ratios: default_budget_ratios(),
            solvers: default_compare_solvers(),
            parallelism: None,
        }
    }
}

impl CompareConfig {
    pub fn client_grid(&self, scenario: &ScenarioConfig) -> Vec<usize> {
        if self.clients.is_empty() {
            vec![scenario.clients]
        } else {
            self.clients.clone()
        }
    }

    pub fn epoch_grid(&self, scenario: &ScenarioConfig) -> Vec<usize> {
        if self.epochs.is_empty() {
            vec![scenario.epochs]
        } else {
            self.epochs.clone()
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_fraction() -> f64 {
    0.5
}
fn default_beta() -> f64 {
    0.5
}
fn default_classes() -> usize {
    2
}
fn default_features() -> usize {
    2
}
fn default_rows_per_client() -> usize {
    100
}
fn default_separation() -> f64 {
    3.0
}
fn default_validation_rows() -> usize {
    400
}
fn default_label_column() -> String {
    "label".into()
}
fn default_validation_fraction() -> f64 {
    0.2
}
fn default_samples() -> usize {
    1000
}
fn yes() -> bool {
    true
}
fn default_utility() -> UtilitySpec {
    UtilitySpec::NegLoss
}
fn default_gamma() -> f64 {
    0.5
}
fn default_window() -> [usize; 2] {
    [1, 5]
}
fn default_flip() -> f64 {
    1.0
}
fn default_hazard() -> f64 {
    0.05
}
fn default_clusters() -> usize {
    2
}
fn default_mc_samples() -> Vec<usize> {
    vec![50, 500]
}
fn default_budget_ratios() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}
fn default_compare_solvers() -> Vec<Solver> {
    vec![Solver::OneSided, Solver::TwoSidedLb]
}

fn check(ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::field(field, message()))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .and_then(|span| key_at(text, span.start))
                .unwrap_or_else(|| "config".into());
            CliError::field(field, e.message().trim().to_string())
        })
    }

    /// Reads, parses and validates a config file. Relative data paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::field("--config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let DataConfig::Csv { path: data, .. } = &mut cfg.scenario.data {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check(!self.seeds.is_empty(), "seeds", || "at least one seed is required".into())?;
        if let Some(c) = self.cutoff_seconds {
            check(c.is_finite() && c >= 0.0, "cutoff_seconds", || format!("must be a non-negative number, got {c}"))?;
        }

        let s = &self.scenario;
        check(s.clients >= 1, "scenario.clients", || "must be at least 1".into())?;
        check(s.epochs >= 1, "scenario.epochs", || "must be at least 1".into())?;
        check(s.fraction > 0.0 && s.fraction <= 1.0, "scenario.fraction", || {
            format!("must lie in (0, 1], got {}", s.fraction)
        })?;
        check(s.beta.is_finite() && s.beta > 0.0, "scenario.beta", || format!("must be positive, got {}", s.beta))?;
        match &s.data {
            DataConfig::Synthetic {
                classes,
                features,
                rows_per_client,
                separation,
                validation_rows,
            } => {
                check(*classes >= 2, "scenario.data.classes", || "must be at least 2".into())?;
                check(features + 1 >= *classes, "scenario.data.features", || {
                    format!("{classes} classes need at least {} features", classes - 1)
                })?;
                check(*rows_per_client >= *classes, "scenario.data.rows_per_client", || {
                    format!("must be at least the class count {classes}")
                })?;
                check(separation.is_finite() && *separation >= 0.0, "scenario.data.separation", || {
                    "must be a non-negative number".into()
                })?;
                check(*validation_rows >= *classes, "scenario.data.validation_rows", || {
                    format!("must be at least the class count {classes}")
                })?;
            }
            DataConfig::Csv {
                path,
                validation_fraction,
                ..
            } => {
                check(path.is_file(), "scenario.data.path", || format!("{} does not exist", path.display()))?;
                check(*validation_fraction > 0.0 && *validation_fraction < 1.0, "scenario.data.validation_fraction", || {
                    format!("must lie in (0, 1), got {validation_fraction}")
                })?;
            }
        }
        if let ModelConfig::Mlp { hidden } = &s.model {
            check(!hidden.is_empty() && hidden.iter().all(|w| *w > 0), "scenario.model.hidden", || {
                "needs at least one positive layer width".into()
            })?;
        }
        check(s.train.local_epochs >= 1, "scenario.train.local_epochs", || "must be at least 1".into())?;
        check(s.train.batch_size >= 1, "scenario.train.batch_size", || "must be at least 1".into())?;
        check(
            s.train.learning_rate.is_finite() && s.train.learning_rate > 0.0,
            "scenario.train.learning_rate",
            || "must be positive".into(),
        )?;

        let a = &self.assessment;
        check(a.samples >= 1, "assessment.samples", || "must be at least 1".into())?;
        check(a.gamma.is_finite() && a.gamma >= 0.0, "assessment.gamma", || format!("must be non-negative, got {}", a.gamma))?;
        match (a.solver, a.k) {
            (Solver::Full, Some(_)) => {
                return Err(CliError::field("assessment.k", "only meaningful with a scheduling solver"));
            }
            (Solver::Full, None) => {}
            (_, None) => return Err(CliError::field("assessment.k", "required when a solver is set")),
            (solver, Some(k)) => {
                check(k <= s.epochs, "assessment.k", || format!("budget {k} exceeds scenario.epochs = {}", s.epochs))?;
                check(solver != Solver::TwoSidedExact || s.epochs <= EXACT_SOLVE_CAP, "assessment.solver", || {
                    format!("two_sided_exact handles at most {EXACT_SOLVE_CAP} epochs; use two_sided_lb")
                })?;
            }
        }

        let d = &self.detection;
        let (start, end) = d.window();
        check(start >= 1 && start <= end, "detection.window", || {
            format!("[{start}, {end}] must satisfy 1 <= start <= end")
        })?;
        check(!d.enabled || end <= s.epochs, "detection.window", || {
            format!("[{start}, {end}] ends after scenario.epochs = {}", s.epochs)
        })?;
        check((0.0..=1.0).contains(&d.flip_probability), "detection.flip_probability", || {
            format!("must lie in [0, 1], got {}", d.flip_probability)
        })?;
        check(d.hazard > 0.0 && d.hazard < 1.0, "detection.hazard", || format!("must lie in (0, 1), got {}", d.hazard))?;
        if let Some(n) = d.noise_scale {
            check(n.is_finite() && n > 0.0, "detection.noise_scale", || "must be positive".into())?;
        }
        check(d.clusters >= 2 && d.clusters <= s.clients, "detection.clusters", || {
            format!("must lie in 2..={}", s.clients)
        })?;
        for (i, c) in d.dishonest.iter().enumerate() {
            check(*c < s.clients, &format!("detection.dishonest[{i}]"), || {
                format!("client {c} does not exist (clients = {})", s.clients)
            })?;
        }
        check(!d.enabled || !d.dishonest.is_empty(), "detection.dishonest", || {
            "enabled detection needs at least one dishonest client".into()
        })?;

        let c = &self.compare;
        for (i, m) in c.client_grid(s).iter().enumerate() {
            check(*m >= 1, &format!("compare.clients[{i}]"), || "must be at least 1".into())?;
            if d.enabled {
                check(d.dishonest.iter().all(|id| id < m), &format!("compare.clients[{i}]"), || {
                    format!("{m} clients cannot host the dishonest set {:?}", d.dishonest)
                })?;
            }
        }
        for (i, t) in c.epoch_grid(s).iter().enumerate() {
            check(*t >= 1, &format!("compare.epochs[{i}]"), || "must be at least 1".into())?;
            check(!d.enabled || *t >= end, &format!("compare.epochs[{i}]"), || {
                format!("must be at least {end} to cover detection.window")
            })?;
            check(!c.solvers.contains(&Solver::TwoSidedExact) || *t <= EXACT_SOLVE_CAP, &format!("compare.epochs[{i}]"), || {
                format!("two_sided_exact handles at most {EXACT_SOLVE_CAP} epochs")
            })?;
        }
        for (i, n) in c.mc_samples.iter().enumerate() {
            check(*n >= 1, &format!("compare.mc_samples[{i}]"), || "must be at least 1".into())?;
        }
        for (i, r) in c.budget_ratios.iter().enumerate() {
            check(*r > 0.0 && *r <= 1.0, &format!("compare.budget_ratios[{i}]"), || format!("must lie in (0, 1], got {r}"))?;
        }
        for (i, solver) in c.solvers.iter().enumerate() {
            check(*solver != Solver::Full, &format!("compare.solvers[{i}]"), || {
                "full assessment is always run; list scheduling solvers only".into()
            })?;
        }
        if let Some(p) = c.parallelism {
            check(p >= 1, "compare.parallelism", || "must be at least 1".into())?;
        }
        Ok(())
    }

    /// The config re-serialized with its output location dropped; this is what gets hashed.
    pub fn canonical_toml(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        toml::to_string(&c).map_err(|e| CliError::Internal(format!("config serialization: {e}")))
    }

    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Dotted path of the key whose value starts at byte `pos`, from the enclosing
/// `[table]` header and the `key =` on that line.
fn key_at(text: &str, pos: usize) -> Option<String> {
    let pos = pos.min(text.len());
    let line_start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next()?.trim();
    let table = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && !l.starts_with("[["))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let key = line.split_once('=').map(|(k, _)| k.trim().to_string());
    match (table, key) {
        (Some(t), Some(k)) => Some(format!("{t}.{k}")),
        (None, Some(k)) => Some(k),
        (Some(t), None) => Some(t),
        (None, None) => None,
    }
}
