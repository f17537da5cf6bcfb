//! Client-intent analysis on contribution timelines: poisoning-window
//! detection via change points and honest/dishonest separation via clustering.

mod changepoint;
mod kmeans;

use std::collections::BTreeSet;

pub use changepoint::{
    detect_change_points, estimate_noise_scale, window_mass, ChangePointPosterior, ChangePointPrior,
};
pub use kmeans::{cluster_clients, ClusterAssignment, MAX_ITERATIONS};

use crate::error::{contract, Result};
use crate::shapley::ContributionTimeline;

/// `c_i(t) = Σ_{t' ≤ t} φ^(t')_i` for `t` in `0..=T`, one series per client.
pub fn cumulative_series(timeline: &ContributionTimeline) -> Result<Vec<Vec<f64>>> {
    if let Some(t) = (1..=timeline.num_epochs).find(|&t| !timeline.is_computed(t)) {
        return Err(contract(format!(
            "epoch {t} was not computed; detection needs a full timeline"
        )));
    }
    Ok(timeline
        .phi
        .iter()
        .map(|row| {
            let mut acc = 0.0;
            row.iter()
                .map(|v| {
                    acc += v.expect("checked above");
                    acc
                })
                .collect()
        })
        .collect())
}

/// Jaccard index between the honest clients and every client that shares a
/// cluster with at least one honest client.
pub fn jaccard_honest_separation(assignment: &ClusterAssignment, honest: &BTreeSet<usize>) -> Result<f64> {
    if honest.is_empty() {
        return Err(contract("honest set must be nonempty"));
    }
    let honest_clusters: BTreeSet<usize> = honest.iter().map(|&c| assignment.labels[c]).collect();
    let covered: BTreeSet<usize> = assignment
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| honest_clusters.contains(l))
        .map(|(c, _)| c)
        .collect();
    Ok(jaccard(honest, &covered))
}

pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}
