use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::rng::{self, Purpose};

use super::game::EpochGame;

/// How per-epoch Shapley values are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ShapleyMethod {
    Exact,
    /// Average marginal payoffs over uniformly random participant orderings.
    MonteCarloPermutation {
        samples: usize,
        seed: u64,
        /// Rescale estimates so they sum to `u(I^(t))`.
        #[serde(default = "yes")]
        rescale: bool,
    },
    /// Complementary-contribution estimator, supplied by a registered plug-in.
    Complementary { samples: usize, seed: u64 },
}

fn yes() -> bool {
    true
}

impl ShapleyMethod {
    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self::MonteCarloPermutation { samples, seed, rescale: true }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Exact => Ok(()),
            Self::MonteCarloPermutation { samples, .. } | Self::Complementary { samples, .. } => {
                if *samples == 0 {
                    Err(config("sampling methods need samples >= 1"))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Exact => "exact".into(),
            Self::MonteCarloPermutation { samples, .. } => format!("mc{samples}"),
            Self::Complementary { samples, .. } => format!("complementary{samples}"),
        }
    }
}

/// A per-epoch estimator that can be slotted in behind [`ShapleyMethod`].
///
/// Implementations return one value per player of `game`, in player order.
pub trait EpochEstimator: Send + Sync {
    fn estimate(&self, game: &EpochGame<'_>, samples: usize, seed: u64) -> Result<Vec<f64>>;
}

/// Named estimator plug-ins.
#[derive(Clone, Default)]
pub struct PluginRegistry {
    plugins: BTreeMap<String, Arc<dyn EpochEstimator>>,
}

/// Registry key used by [`ShapleyMethod::Complementary`].
pub const COMPLEMENTARY_PLUGIN: &str = "complementary";

impl PluginRegistry {
    pub fn register(&mut self, name: impl Into<String>, plugin: Arc<dyn EpochEstimator>) {
        self.plugins.insert(name.into(), plugin);
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn EpochEstimator>> {
        self.plugins
            .get(name)
            .ok_or_else(|| config(format!("no Shapley plug-in registered under {name:?}")))
    }
}

impl std::fmt::Debug for PluginRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.plugins.keys()).finish()
    }
}

/// Permutation-sampling estimate, in player order.
///
/// Every sampled ordering telescopes to `u(I^(t))`, so the rescaling step only
/// absorbs rounding; it is skipped when the total is numerically zero.
pub fn monte_carlo_shapley(game: &EpochGame<'_>, samples: usize, seed: u64, rescale: bool) -> Vec<f64> {
    let n = game.num_players();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![game.payoff(1)];
    }
    let mut rng = rng::stream(seed, Purpose::MonteCarlo, game.record().epoch as u64, 0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut sums = vec![0.0; n];
    for _ in 0..samples {
        order.shuffle(&mut rng);
        let mut mask = 0u32;
        let mut prev = 0.0;
        for &j in &order {
            mask |= 1 << j;
            let cur = game.payoff(mask);
            sums[j] += cur - prev;
            prev = cur;
        }
    }
    let mut est: Vec<f64> = sums.into_iter().map(|s| s / samples as f64).collect();
    if rescale {
        let target = game.payoff(game.full_mask());
        let total: f64 = est.iter().sum();
        if total.abs() > 1e-300 && target.abs() > 1e-300 {
            let factor = target / total;
            est.iter_mut().for_each(|v| *v *= factor);
        }
    }
    est
}
