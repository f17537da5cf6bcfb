use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::rng::{self, Purpose};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster label per client.
    pub labels: Vec<usize>,
    pub num_clusters: usize,
    /// Set when fewer distinct series than requested clusters forced a smaller `k`.
    pub reduced: bool,
    pub iterations: usize,
}

impl ClusterAssignment {
    /// Clients grouped by cluster, as a partition independent of label names.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_clusters];
        for (c, &l) in self.labels.iter().enumerate() {
            groups[l].push(c);
        }
        groups.retain(|g| !g.is_empty());
        groups.sort();
        groups
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Euclidean k-means on equal-length series with k-means++ seeding.
///
/// Lloyd iterations stop at an assignment fixed point or after
/// [`MAX_ITERATIONS`]. An emptied cluster is re-seeded with the point farthest
/// from its current center.
pub fn cluster_clients(series: &[Vec<f64>], k_clusters: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = series.len();
    if k_clusters < 2 || k_clusters > n {
        return Err(contract(format!("k = {k_clusters} must lie in 2..={n}")));
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(contract("all series must have the same length"));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for s in series {
        if !distinct.contains(&s) {
            distinct.push(s);
        }
    }
    let k = k_clusters.min(distinct.len());
    let reduced = k < k_clusters;

    let mut rng = rng::stream(seed, Purpose::Clustering, 0, 0);
    let mut centers: Vec<Vec<f64>> = vec![series[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let weights: Vec<f64> = series.iter().map(|s| nearest(s, &centers).1).collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 && target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // guard against rounding landing on an existing center
            if weights[pick] == 0.0 {
                (0..n).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap()
            } else {
                pick
            }
        } else {
            break;
        };
        centers.push(series[next].clone());
    }

    let mut labels: Vec<usize> = series.iter().map(|s| nearest(s, &centers).0).collect();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = vec![vec![0.0; len]; k];
        let mut counts = vec![0usize; k];
        for (s, &l) in series.iter().zip(&labels) {
            counts[l] += 1;
            for (a, v) in sums[l].iter_mut().zip(s) {
                *a += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|v| v / counts[j] as f64).collect();
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&series[a], &centers[labels[a]])
                            .total_cmp(&sq_dist(&series[b], &centers[labels[b]]))
                    })
                    .unwrap();
                centers[j] = series[far].clone();
            }
        }
        let next: Vec<usize> = series.iter().map(|s| nearest(s, &centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(ClusterAssignment {
        labels,
        num_clusters: k,
        reduced,
        iterations,
    })
}
