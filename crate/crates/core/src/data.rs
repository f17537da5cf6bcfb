//! Datasets and the data-side operations of the simulator: synthetic
//! generation, CSV ingestion, non-i.i.d. partitioning and label poisoning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Error, Result};
use crate::rng::{self, Purpose};

/// A labelled feature matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub num_features: usize,
    pub num_classes: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        num_features: usize,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(contract("dataset must hold at least one row"));
        }
        if features.len() != labels.len() * num_features {
            return Err(contract(format!(
                "feature buffer has {} values, expected {} rows x {} features",
                features.len(),
                labels.len(),
                num_features
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(contract(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            name: name.into(),
            num_features,
            num_classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    /// Rows in the given order, as a new dataset.
    pub fn select(&self, rows: &[usize], name: impl Into<String>) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.num_features);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Dataset {
            name: name.into(),
            num_features: self.num_features,
            num_classes: self.num_classes,
            features,
            labels,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Vertices of a regular simplex with unit pairwise distance, embedded in the
/// first `classes - 1` coordinates.
fn simplex_vertices(classes: usize) -> Vec<Vec<f64>> {
    let dim = classes - 1;
    // centered standard basis vectors of R^classes have pairwise distance sqrt(2)
    let inv = 1.0 / classes as f64;
    let centered: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            (0..classes)
                .map(|j| if j == c { 1.0 - inv } else { -inv })
                .collect()
        })
        .collect();
    // orthonormal basis of their span via Gram-Schmidt
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for v in centered.iter() {
        if basis.len() == dim {
            break;
        }
        let mut w = v.clone();
        for b in &basis {
            let dot: f64 = w.iter().zip(b).map(|(a, b)| a * b).sum();
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= dot * bi;
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            basis.push(w.into_iter().map(|x| x / norm).collect());
        }
    }
    let scale = 1.0 / std::f64::consts::SQRT_2;
    centered
        .iter()
        .map(|v| {
            basis
                .iter()
                .map(|b| scale * v.iter().zip(b).map(|(a, b)| a * b).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Gaussian blobs with unit covariance, one per class, whose means sit on a
/// regular simplex with pairwise distance `separation`.
///
/// Row `r` has label `r % classes`. Requires `features >= classes - 1`.
pub fn make_synthetic(
    classes: usize,
    n: usize,
    features: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(config("synthetic data needs at least 2 classes"));
    }
    if n < classes {
        return Err(config(format!("n = {n} is smaller than classes = {classes}")));
    }
    if features + 1 < classes {
        return Err(config(format!(
            "{classes} equidistant class means need at least {} features",
            classes - 1
        )));
    }
    let vertices = simplex_vertices(classes);
    let mut rng = rng::stream(seed, Purpose::Synthetic, 0, 0);
    let mut data = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let y = r % classes;
        for j in 0..features {
            let mean = vertices[y].get(j).copied().unwrap_or(0.0) * separation;
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push(mean + noise);
        }
        labels.push(y);
    }
    Dataset::new(format!("synthetic-{seed}"), features, classes, data, labels)
}

/// Reads a CSV file with a header row.
///
/// The column named `label_column` holds non-negative integer class labels;
/// every other column must be numeric. Categorical features have to be
/// integer- or one-hot encoded beforehand. The class count is `max label + 1`.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Ingest {
            row: 1,
            column: label_column.to_string(),
            message: "label column not found in header".into(),
        })?;
    let num_features = headers.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1
        let row = i + 2;
        if record.len() != headers.len() {
            return Err(Error::Ingest {
                row,
                column: String::new(),
                message: format!("expected {} cells, found {}", headers.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                let y: usize = cell.parse().map_err(|_| Error::Ingest {
                    row,
                    column: headers[j].to_string(),
                    message: format!("label {cell:?} is not a non-negative integer"),
                })?;
                labels.push(y);
            } else {
                let x: f64 = cell.parse().map_err(|_| Error::Ingest {
                    row,
                    column: headers[j].to_string(),
                    message: format!("cell {cell:?} is not numeric"),
                })?;
                features.push(x);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Ingest {
            row: 1,
            column: String::new(),
            message: "file has no data rows".into(),
        });
    }
    let num_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(name, num_features, num_classes.max(2), features, labels)
}

const PARTITION_RETRIES: usize = 16;

/// Random train/validation split with `round(fraction · n)` validation rows
/// (at least one on each side). Both parts keep source row order.
pub fn holdout_split(source: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(config(format!("validation fraction must lie in (0, 1), got {fraction}")));
    }
    let n = source.len();
    if n < 2 {
        return Err(config("need at least two rows to hold out a validation set"));
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = rng::stream(seed, Purpose::Holdout, 0, 0);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    let mut is_val = vec![false; n];
    picked.iter().for_each(|&r| is_val[r] = true);
    let train: Vec<usize> = (0..n).filter(|&r| !is_val[r]).collect();
    Ok((
        source.select(&train, format!("{}-train", source.name)),
        source.select(&picked, format!("{}-validation", source.name)),
    ))
}

/// Splits `source` across `m` clients with per-class Dirichlet(`beta`) proportions.
///
/// Each class's rows are shuffled, then cut into consecutive chunks whose
/// sizes follow the class's proportion vector. If some client ends up empty
/// the draw is repeated (continuing the same stream) up to a fixed number of
/// times, after which empty clients take one row each from the largest
/// clients. Partitions are disjoint, exhaustive, and keep source row order.
pub fn partition_noniid(source: &Dataset, m: usize, beta: f64, seed: u64) -> Result<Vec<Dataset>> {
    if m == 0 {
        return Err(config("number of clients must be at least 1"));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(config(format!("beta must be positive and finite, got {beta}")));
    }
    let n = source.len();
    if m > n {
        return Err(config(format!("{m} clients but only {n} rows")));
    }
    let gamma = Gamma::new(beta, 1.0).map_err(|e| config(e.to_string()))?;
    let mut rng = rng::stream(seed, Purpose::Partition, 0, 0);

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); source.num_classes];
    for (r, &y) in source.labels.iter().enumerate() {
        by_class[y].push(r);
    }

    let mut owners = vec![Vec::new(); m];
    for attempt in 0..=PARTITION_RETRIES {
        owners.iter_mut().for_each(Vec::clear);
        for rows in &by_class {
            if rows.is_empty() {
                continue;
            }
            let mut rows = rows.clone();
            rows.shuffle(&mut rng);
            let weights: Vec<f64> = (0..m).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = weights.iter().sum();
            let nc = rows.len();
            let mut start = 0usize;
            let mut acc = 0.0;
            for (client, w) in weights.iter().enumerate() {
                acc += w;
                let end = if client + 1 == m || total <= 0.0 {
                    nc
                } else {
                    ((acc / total) * nc as f64).round().clamp(start as f64, nc as f64) as usize
                };
                owners[client].extend_from_slice(&rows[start..end]);
                start = end;
            }
        }
        if owners.iter().all(|o| !o.is_empty()) || attempt == PARTITION_RETRIES {
            break;
        }
    }
    // round-robin top-up from the currently largest client
    while let Some(empty) = owners.iter().position(Vec::is_empty) {
        let donor = (0..m)
            .max_by_key(|&c| (owners[c].len(), std::cmp::Reverse(c)))
            .expect("m >= 1");
        let row = owners[donor].pop().expect("donor has at least two rows");
        owners[empty].push(row);
    }
    Ok(owners
        .into_iter()
        .enumerate()
        .map(|(c, mut rows)| {
            rows.sort_unstable();
            source.select(&rows, format!("{}/client-{c}", source.name))
        })
        .collect())
}

/// Returns a copy of `data` where each label is, with probability
/// `flip_probability`, replaced by a uniformly chosen different class.
pub fn poison_labels(data: &Dataset, flip_probability: f64, seed: u64) -> Dataset {
    let mut out = data.clone();
    let classes = data.num_classes;
    if classes < 2 {
        return out;
    }
    let mut rng = rng::stream(seed, Purpose::Poisoning, 0, 0);
    for y in out.labels.iter_mut() {
        let u: f64 = rng.random();
        if u < flip_probability {
            let r = rng.random_range(0..classes - 1);
            *y = if r < *y { r } else { r + 1 };
        }
    }
    out
}
