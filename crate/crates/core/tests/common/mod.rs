#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use fedshap_core::data::{make_synthetic, partition_noniid};
use fedshap_core::model::{evaluate_utility, ModelSpec, ParamVector, TrainConfig, UtilitySpec};
use fedshap_core::sim::{AggregationRule, ClientConfig, EpochRecord, Scenario};
use fedshap_core::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEPARATION: f64 = 3.0;

/// Two Gaussian classes in the plane, logistic model, `100·m` training rows.
pub fn scenario(m: usize, epochs: usize, fraction: f64, seed: u64) -> Scenario {
    let source = make_synthetic(2, 100 * m, 2, SEPARATION, seed).unwrap();
    let parts = partition_noniid(&source, m, 1e3, seed).unwrap();
    Scenario {
        clients: parts.into_iter().enumerate().map(|(i, d)| ClientConfig::honest(i, d)).collect(),
        model_spec: ModelSpec::logistic(2, 2),
        epochs,
        fraction,
        train: TrainConfig { local_epochs: 5, batch_size: 32, learning_rate: 0.1 },
        validation: make_synthetic(2, 400, 2, SEPARATION, seed + 1000).unwrap(),
        aggregation: AggregationRule::FedAvg,
        seed,
    }
}

/// Same as [`scenario`] with the listed clients flipping labels inside `window`.
pub fn poisoned(
    m: usize,
    epochs: usize,
    fraction: f64,
    dishonest: &[usize],
    window: (usize, usize),
    flip: f64,
    seed: u64,
) -> Scenario {
    let mut s = scenario(m, epochs, fraction, seed);
    for c in s.clients.iter_mut().filter(|c| dishonest.contains(&c.client_id)) {
        *c = ClientConfig::dishonest(c.client_id, c.data.clone(), window, flip);
    }
    s
}

pub fn validation_set(seed: u64) -> Dataset {
    make_synthetic(2, 200, 2, SEPARATION, seed).unwrap()
}

/// A hand-built epoch for a 2-feature logistic model (6 parameters).
pub fn epoch_record(
    before: Vec<f64>,
    gradients: &[(usize, Vec<f64>)],
    data_sizes: Vec<usize>,
) -> EpochRecord {
    let before = ParamVector(before);
    let gradients: BTreeMap<usize, ParamVector> =
        gradients.iter().map(|(c, g)| (*c, ParamVector(g.clone()))).collect();
    let after = naive_submodel(&before, &gradients, &data_sizes, &gradients.keys().copied().collect());
    EpochRecord {
        epoch: 1,
        participants: gradients.keys().copied().collect(),
        gradients,
        data_sizes,
        global_before: before,
        global_after: after,
        aggregated: None,
    }
}

/// Random epoch with `players` participants out of `m` clients.
pub fn random_record(m: usize, players: usize, rng: &mut ChaCha8Rng) -> EpochRecord {
    let mut ids: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let mut chosen = ids[..players].to_vec();
    chosen.sort();
    let before: Vec<f64> = (0..6).map(|_| rng.random_range(-0.5..0.5)).collect();
    let grads: Vec<(usize, Vec<f64>)> =
        chosen.iter().map(|&c| (c, (0..6).map(|_| rng.random_range(-1.5..1.5)).collect())).collect();
    let sizes = (0..m).map(|_| rng.random_range(5..50)).collect();
    epoch_record(before, &grads, sizes)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `F^(t-1) + Σ_{i∈S∩I} |D_i|/Σ_{j∈S∩I}|D_j| · Δ_i`, written out directly.
pub fn naive_submodel(
    before: &ParamVector,
    gradients: &BTreeMap<usize, ParamVector>,
    data_sizes: &[usize],
    coalition: &BTreeSet<usize>,
) -> ParamVector {
    let members: Vec<usize> = gradients.keys().copied().filter(|c| coalition.contains(c)).collect();
    let total: f64 = members.iter().map(|&c| data_sizes[c] as f64).sum();
    let mut out = before.0.clone();
    for &c in &members {
        let w = data_sizes[c] as f64 / total;
        for (o, g) in out.iter_mut().zip(&gradients[&c].0) {
            *o += w * g;
        }
    }
    ParamVector(out)
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Shapley values by averaging marginal payoffs over every ordering of the
/// participants. Non-participants get 0.
pub fn permutation_oracle(
    record: &EpochRecord,
    spec: &ModelSpec,
    validation: &Dataset,
    utility: UtilitySpec,
    num_clients: usize,
) -> Vec<f64> {
    let v_before = evaluate_utility(&record.global_before, spec, validation, utility).unwrap();
    let payoff = |s: &BTreeSet<usize>| {
        let model = naive_submodel(&record.global_before, &record.gradients, &record.data_sizes, s);
        evaluate_utility(&model, spec, validation, utility).unwrap() - v_before
    };
    let mut cache: BTreeMap<BTreeSet<usize>, f64> = BTreeMap::new();
    let mut phi = vec![0.0; num_clients];
    let orders = permutations(&record.participants);
    for order in &orders {
        let mut s = BTreeSet::new();
        let mut prev = 0.0;
        for &c in order {
            s.insert(c);
            let v = *cache.entry(s.clone()).or_insert_with(|| payoff(&s));
            phi[c] += v - prev;
            prev = v;
        }
    }
    phi.iter_mut().for_each(|p| *p /= orders.len() as f64);
    phi
}

/// Objective values written out from the ILP definitions, independent of the
/// library's evaluator. Normalisation follows the documented constants.
pub struct OracleObjective<'a> {
    pub problem: &'a fedshap_core::ScheduleProblem,
}

impl OracleObjective<'_> {
    fn coverage_norm(&self) -> f64 {
        let pr = self.problem;
        if !pr.normalize_terms {
            return 1.0;
        }
        let mut p = pr.p.clone();
        p.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let best: f64 = p[..pr.budget].iter().sum();
        if best > 0.0 { best } else { 1.0 }
    }

    fn column_imbalance(&self, t: usize) -> f64 {
        let x = &self.problem.x;
        let mut s = 0.0;
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                s += (x[i][t] - x[j][t]).abs();
            }
        }
        s
    }

    fn imbalance_norm(&self) -> f64 {
        if !self.problem.normalize_terms {
            return 1.0;
        }
        let all: f64 = (0..self.problem.epochs).map(|t| self.column_imbalance(t)).sum();
        if all > 0.0 { all } else { 1.0 }
    }

    fn exposure_norm(&self) -> f64 {
        if !self.problem.normalize_terms {
            return 1.0;
        }
        let all: f64 = self.problem.x.iter().flatten().sum();
        if all > 0.0 { all } else { 1.0 }
    }

    pub fn value(&self, z: &[bool], kind: fedshap_core::schedule::ObjectiveKind) -> f64 {
        use fedshap_core::schedule::ObjectiveKind::*;
        let pr = self.problem;
        let on: Vec<usize> = (0..pr.epochs).filter(|&t| z[t]).collect();
        let coverage = on.iter().map(|&t| pr.p[t]).sum::<f64>() / self.coverage_norm();
        match kind {
            OneSided => {
                let exposure: f64 = on.iter().map(|&t| pr.x.iter().map(|row| row[t]).sum::<f64>()).sum();
                coverage + pr.gamma * exposure / self.exposure_norm()
            }
            TwoSided => {
                let e: Vec<f64> = pr.x.iter().map(|row| on.iter().map(|&t| row[t]).sum()).collect();
                let mut pen = 0.0;
                for i in 0..e.len() {
                    for j in i + 1..e.len() {
                        pen += (e[i] - e[j]).abs();
                    }
                }
                coverage - pr.gamma * pen / self.imbalance_norm()
            }
            TwoSidedLb => {
                let pen: f64 = on.iter().map(|&t| self.column_imbalance(t)).sum();
                coverage - pr.gamma * pen / self.imbalance_norm()
            }
        }
    }

    /// Best value over every `z` with at most `k` ones.
    pub fn optimum(&self, kind: fedshap_core::schedule::ObjectiveKind) -> f64 {
        let t = self.problem.epochs;
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << t) {
            if mask.count_ones() as usize > self.problem.budget {
                continue;
            }
            let z: Vec<bool> = (0..t).map(|i| mask >> i & 1 == 1).collect();
            best = best.max(self.value(&z, kind));
        }
        best
    }
}

/// Random scheduling instance with `T ≤ max_t`.
pub fn random_problem(r: &mut ChaCha8Rng, max_t: usize, normalize: bool) -> fedshap_core::ScheduleProblem {
    let t = r.random_range(1..=max_t);
    let m = r.random_range(1..=5);
    let deltas: Vec<f64> = (0..t).map(|_| r.random_range(-1.0..1.0)).collect();
    let participants: Vec<Vec<usize>> = (0..t)
        .map(|_| (0..m).filter(|_| r.random_bool(0.6)).collect())
        .collect();
    let p = fedshap_core::ScheduleProblem::epoch_weights(&deltas);
    let x = fedshap_core::ScheduleProblem::participation_rates(&participants, m);
    let k = r.random_range(0..=t);
    let gamma = if r.random_bool(0.2) { 0.0 } else { r.random_range(0.0..2.0) };
    fedshap_core::ScheduleProblem::new(p, x, k, gamma).unwrap().normalized(normalize)
}
