use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::{evaluate_utility, UtilitySpec};
use crate::schedule::Schedule;
use crate::sim::GradientLog;

use super::approx::{monte_carlo_shapley, PluginRegistry, ShapleyMethod, COMPLEMENTARY_PLUGIN};
use super::exact::{exact_game_shapley, spread};
use super::game::EpochGame;
use super::initial_allocation;

/// `v(F^(0))` and the per-epoch increments `v(F^(t)) - v(F^(t-1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalUtility {
    pub base: f64,
    pub deltas: Vec<f64>,
    pub final_value: f64,
}

impl IncrementalUtility {
    pub fn from_log(log: &GradientLog, utility: UtilitySpec) -> Result<Self> {
        let values = (0..=log.num_epochs())
            .map(|t| evaluate_utility(log.global_model(t), &log.model_spec, &log.validation, utility))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            base: values[0],
            deltas: values.windows(2).map(|w| w[1] - w[0]).collect(),
            final_value: *values.last().expect("at least F^(0)"),
        })
    }
}

/// Per-client, per-epoch contributions. Column 0 is the initial allocation;
/// `None` marks an epoch whose Shapley values were not computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionTimeline {
    pub utility: UtilitySpec,
    pub method: ShapleyMethod,
    pub num_clients: usize,
    pub num_epochs: usize,
    /// `phi[client][t]` for `t` in `0..=T`.
    pub phi: Vec<Vec<Option<f64>>>,
    pub incremental: IncrementalUtility,
    /// Utility evaluations spent in epoch `t` (index `t - 1`).
    pub evaluations: Vec<usize>,
    /// False when assessment stopped at a deadline before finishing its schedule.
    pub complete: bool,
}

impl ContributionTimeline {
    pub fn is_computed(&self, epoch: usize) -> bool {
        epoch == 0 || self.phi.first().is_some_and(|row| row[epoch].is_some())
    }

    pub fn computed_epochs(&self) -> Vec<usize> {
        (1..=self.num_epochs).filter(|&t| self.is_computed(t)).collect()
    }

    pub fn value(&self, client: usize, epoch: usize) -> Option<f64> {
        self.phi[client][epoch]
    }

    /// `phi^(0)_i + sum over computed epochs of phi^(t)_i`.
    pub fn total(&self, client: usize) -> f64 {
        self.phi[client].iter().flatten().sum()
    }

    pub fn totals(&self) -> Vec<f64> {
        (0..self.num_clients).map(|c| self.total(c)).collect()
    }

    /// Incremental utility of the epochs left uncomputed.
    pub fn residual(&self) -> f64 {
        (1..=self.num_epochs)
            .filter(|&t| !self.is_computed(t))
            .map(|t| self.incremental.deltas[t - 1])
            .sum()
    }

    pub fn total_evaluations(&self) -> usize {
        self.evaluations.iter().sum()
    }

    /// One row per client and epoch: `client_id,epoch,phi,computed,cumulative_phi`.
    /// `phi` is empty for uncomputed epochs, which add nothing to the running sum.
    pub fn to_csv(&self, meta: &BTreeMap<String, String>) -> String {
        let mut out = String::new();
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("client_id,epoch,phi,computed,cumulative_phi\n");
        for (c, row) in self.phi.iter().enumerate() {
            let mut running = 0.0;
            for (t, v) in row.iter().enumerate() {
                running += v.unwrap_or(0.0);
                let phi = v.map(|x| format!("{x:?}")).unwrap_or_default();
                let _ = writeln!(out, "{c},{t},{phi},{},{running:?}", v.is_some() as u8);
            }
        }
        out
    }

    /// Totals, residual and evaluation counts. Wall-clock is reported separately.
    pub fn summary(&self) -> TimelineSummary {
        TimelineSummary {
            method: self.method.label(),
            utility: self.utility,
            num_clients: self.num_clients,
            num_epochs: self.num_epochs,
            computed_epochs: self.computed_epochs(),
            complete: self.complete,
            totals: self.totals(),
            residual: self.residual(),
            initial_utility: self.incremental.base,
            final_utility: self.incremental.final_value,
            evaluations_per_epoch: self.evaluations.clone(),
            total_evaluations: self.total_evaluations(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSummary {
    pub method: String,
    pub utility: UtilitySpec,
    pub num_clients: usize,
    pub num_epochs: usize,
    pub computed_epochs: Vec<usize>,
    pub complete: bool,
    pub totals: Vec<f64>,
    pub residual: f64,
    pub initial_utility: f64,
    pub final_utility: f64,
    pub evaluations_per_epoch: Vec<usize>,
    pub total_evaluations: usize,
}

/// Contribution assessment over a gradient log.
#[derive(Debug, Clone)]
pub struct Assessor {
    pub utility: UtilitySpec,
    pub method: ShapleyMethod,
    pub plugins: PluginRegistry,
    pub deadline: Option<Instant>,
}

impl Assessor {
    pub fn new(utility: UtilitySpec, method: ShapleyMethod) -> Self {
        Self {
            utility,
            method,
            plugins: PluginRegistry::default(),
            deadline: None,
        }
    }

    pub fn with_plugins(mut self, plugins: PluginRegistry) -> Self {
        self.plugins = plugins;
        self
    }

    pub fn with_deadline(mut self, deadline: Option<Instant>) -> Self {
        self.deadline = deadline;
        self
    }

    /// Computes per-epoch values for the scheduled epochs (all when `schedule` is `None`).
    ///
    /// Epochs are processed in order; if the deadline passes, the remaining
    /// scheduled epochs stay uncomputed and the timeline is flagged incomplete.
    pub fn assess(&self, log: &GradientLog, schedule: Option<&Schedule>) -> Result<ContributionTimeline> {
        self.method.validate()?;
        let t_max = log.num_epochs();
        let m = log.num_clients;
        if let Some(s) = schedule {
            if s.z.len() != t_max {
                return Err(contract(format!(
                    "schedule covers {} epochs, log has {t_max}",
                    s.z.len()
                )));
            }
        }
        let plugin = match &self.method {
            ShapleyMethod::Complementary { .. } => Some(self.plugins.get(COMPLEMENTARY_PLUGIN)?.clone()),
            _ => None,
        };
        let incremental = IncrementalUtility::from_log(log, self.utility)?;

        let mut phi = vec![vec![None; t_max + 1]; m];
        for (c, v) in initial_allocation(incremental.base, m).into_iter().enumerate() {
            phi[c][0] = Some(v);
        }
        let mut evaluations = vec![0; t_max];
        let mut complete = true;
        for (idx, record) in log.epochs.iter().enumerate() {
            let t = idx + 1;
            if schedule.is_some_and(|s| !s.z[idx]) {
                continue;
            }
            if self.deadline.is_some_and(|d| Instant::now() >= d) {
                complete = false;
                break;
            }
            let game = EpochGame::new(record, &log.model_spec, &log.validation, self.utility)?;
            let values = match &self.method {
                ShapleyMethod::Exact => exact_game_shapley(&game),
                ShapleyMethod::MonteCarloPermutation { samples, seed, rescale } => {
                    monte_carlo_shapley(&game, *samples, *seed, *rescale)
                }
                ShapleyMethod::Complementary { samples, seed } => {
                    let values = plugin.as_ref().expect("resolved above").estimate(&game, *samples, *seed)?;
                    if values.len() != game.num_players() {
                        return Err(contract("plug-in returned the wrong number of values"));
                    }
                    values
                }
            };
            for (c, v) in spread(&game, &values, m) {
                phi[c][t] = Some(v);
            }
            evaluations[idx] = game.evaluations();
        }

        Ok(ContributionTimeline {
            utility: self.utility,
            method: self.method.clone(),
            num_clients: m,
            num_epochs: t_max,
            phi,
            incremental,
            evaluations,
            complete,
        })
    }
}

/// Shorthand for [`Assessor::assess`] without plug-ins or deadline.
pub fn assess(
    log: &GradientLog,
    utility: UtilitySpec,
    method: ShapleyMethod,
    schedule: Option<&Schedule>,
) -> Result<ContributionTimeline> {
    Assessor::new(utility, method).assess(log, schedule)
}

/// Mean over clients of the squared difference of total contributions.
pub fn mse_vs_exact(estimate: &ContributionTimeline, exact: &ContributionTimeline) -> Result<f64> {
    if estimate.num_clients != exact.num_clients || estimate.num_epochs != exact.num_epochs {
        return Err(contract(format!(
            "timeline shapes differ: {}x{} vs {}x{}",
            estimate.num_clients, estimate.num_epochs, exact.num_clients, exact.num_epochs
        )));
    }
    if exact.num_clients == 0 {
        return Ok(0.0);
    }
    let sum: f64 = estimate
        .totals()
        .iter()
        .zip(exact.totals())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / exact.num_clients as f64)
}
