//! History-aware per-epoch Shapley values.
//!
//! In each epoch only the selected clients `I^(t)` play. A coalition `S` is
//! valued through the sub-model rebuilt from the previous global model and
//! the gradients of `S ∩ I^(t)`, re-weighted by data size within that
//! intersection. Non-participants never change a sub-model, so their value is
//! exactly zero and costs nothing. Summing per-epoch values (plus an even
//! split of the initial model's utility) gives each client's total.

mod approx;
mod exact;
mod game;
mod greedy;
mod timeline;

use std::collections::BTreeSet;

pub use approx::{
    monte_carlo_shapley, EpochEstimator, PluginRegistry, ShapleyMethod, COMPLEMENTARY_PLUGIN,
};
pub use exact::{exact_epoch_shapley, exact_game_shapley};
pub use game::{EpochGame, MAX_PLAYERS};
pub use greedy::{best_coalition, greedy_aggregate};
pub use timeline::{assess, mse_vs_exact, Assessor, ContributionTimeline, IncrementalUtility, TimelineSummary};

use crate::model::ParamVector;
use crate::sim::{weighted_step, ClientId, EpochRecord};

/// `λ(i, S)`: the data share of `i` within `S`, or 0 when `i ∉ S`.
pub fn lambda_weight(client: ClientId, coalition: &BTreeSet<ClientId>, data_sizes: &[usize]) -> f64 {
    if !coalition.contains(&client) {
        return 0.0;
    }
    let total: usize = coalition.iter().map(|&c| data_sizes[c]).sum();
    if total == 0 {
        return 0.0;
    }
    data_sizes[client] as f64 / total as f64
}

/// `F^(t)_S = F^(t-1) + Σ_{i ∈ S} λ(i, S ∩ I^(t)) Δ^(t)_i`.
pub fn reconstruct_submodel(record: &EpochRecord, coalition: &BTreeSet<ClientId>) -> ParamVector {
    weighted_step(
        &record.global_before,
        record
            .gradients
            .iter()
            .filter(|(c, _)| coalition.contains(c))
            .map(|(c, g)| (record.data_sizes[*c], g)),
    )
}

/// Even split of the initial model's utility across `m` clients.
pub fn initial_allocation(v0: f64, m: usize) -> Vec<f64> {
    vec![v0 / m as f64; m]
}
