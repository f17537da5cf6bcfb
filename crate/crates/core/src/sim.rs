//! Federated training simulation: client selection, poisoning windows,
//! local training, FedAvg aggregation and the gradient log it records.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{poison_labels, Dataset};
use crate::error::{config, contract, Error, Result};
use crate::model::{init_model, local_train, ModelSpec, ParamVector, TrainConfig, UtilitySpec};
use crate::rng::{self, Purpose};
use crate::shapley::greedy_aggregate;

pub type ClientId = usize;

pub const LOG_VERSION: &str = "fedshap-gradient-log/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub client_id: ClientId,
    pub data: Dataset,
    pub dishonest: bool,
    /// Inclusive epoch range in which training labels are flipped.
    pub poison_window: Option<(usize, usize)>,
    pub flip_probability: f64,
}

impl ClientConfig {
    pub fn honest(client_id: ClientId, data: Dataset) -> Self {
        Self {
            client_id,
            data,
            dishonest: false,
            poison_window: None,
            flip_probability: 0.0,
        }
    }

    pub fn dishonest(client_id: ClientId, data: Dataset, window: (usize, usize), flip: f64) -> Self {
        Self {
            client_id,
            data,
            dishonest: true,
            poison_window: Some(window),
            flip_probability: flip,
        }
    }

    pub fn poisons_at(&self, epoch: usize) -> bool {
        self.dishonest
            && self
                .poison_window
                .is_some_and(|(start, end)| start <= epoch && epoch <= end)
    }
}

/// One training epoch as seen by the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Selected clients, ascending.
    pub participants: Vec<ClientId>,
    pub gradients: BTreeMap<ClientId, ParamVector>,
    /// `|D_i|` for every client, indexed by client id.
    pub data_sizes: Vec<usize>,
    pub global_before: ParamVector,
    pub global_after: ParamVector,
    /// Subset actually aggregated when the run used greedy aggregation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregated: Option<Vec<ClientId>>,
}

impl EpochRecord {
    pub fn is_participant(&self, client: ClientId) -> bool {
        self.gradients.contains_key(&client)
    }
}

/// How the server combines the participants' gradients each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum AggregationRule {
    #[default]
    FedAvg,
    /// Aggregate only the participant subset with the best validation utility.
    Greedy { utility: UtilitySpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientLog {
    pub version: String,
    pub model_spec: ModelSpec,
    pub num_clients: usize,
    pub aggregation: AggregationRule,
    pub initial_model: ParamVector,
    pub epochs: Vec<EpochRecord>,
    pub validation: Dataset,
    /// Free-form provenance (config hash, seed, tool version).
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl GradientLog {
    pub fn num_epochs(&self) -> usize {
        self.epochs.len()
    }

    /// `F^(t)` for `t` in `0..=T`.
    pub fn global_model(&self, t: usize) -> &ParamVector {
        if t == 0 {
            &self.initial_model
        } else {
            &self.epochs[t - 1].global_after
        }
    }

    pub fn final_model(&self) -> &ParamVector {
        self.global_model(self.num_epochs())
    }

    /// Checks the chain and (for FedAvg runs) the aggregation invariants.
    pub fn validate(&self) -> Result<()> {
        let mut prev = &self.initial_model;
        for (idx, rec) in self.epochs.iter().enumerate() {
            if rec.epoch != idx + 1 {
                return Err(contract(format!("epoch {} recorded at position {}", rec.epoch, idx + 1)));
            }
            if &rec.global_before != prev {
                return Err(contract(format!("epoch {}: global_before breaks the chain", rec.epoch)));
            }
            let keys: Vec<ClientId> = rec.gradients.keys().copied().collect();
            if keys != rec.participants {
                return Err(contract(format!("epoch {}: gradients not keyed by participants", rec.epoch)));
            }
            if rec.data_sizes.len() != self.num_clients {
                return Err(contract(format!("epoch {}: data_sizes length mismatch", rec.epoch)));
            }
            let kept = match (&self.aggregation, &rec.aggregated) {
                (AggregationRule::FedAvg, None) => &rec.participants,
                (AggregationRule::Greedy { .. }, Some(kept)) => kept,
                _ => return Err(contract(format!("epoch {}: aggregated subset does not match the rule", rec.epoch))),
            };
            if kept.iter().any(|c| !rec.gradients.contains_key(c)) {
                return Err(contract(format!("epoch {}: aggregated client without a gradient", rec.epoch)));
            }
            let expected = weighted_step(
                &rec.global_before,
                kept.iter().map(|c| (rec.data_sizes[*c], &rec.gradients[c])),
            );
            if expected != rec.global_after {
                return Err(contract(format!("epoch {}: global_after is not the aggregate of its clients", rec.epoch)));
            }
            prev = &rec.global_after;
        }
        Ok(())
    }

    /// Pretty JSON. Floats use the shortest representation that parses back
    /// to the identical `f64`, so the round trip is lossless.
    pub fn to_json(&self) -> Result<String> {
        let finite = self.initial_model.is_finite()
            && self.epochs.iter().all(|e| {
                e.global_after.is_finite() && e.gradients.values().all(ParamVector::is_finite)
            });
        if !finite {
            return Err(Error::Format("gradient log holds non-finite parameters".into()));
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let log: GradientLog = serde_json::from_str(text)?;
        if log.version != LOG_VERSION {
            return Err(Error::Format(format!("unsupported log version {:?}", log.version)));
        }
        Ok(log)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Uniformly samples `round(fraction * m)` clients (at least one), ascending.
pub fn select_clients(m: usize, fraction: f64, epoch: usize, seed: u64) -> Vec<ClientId> {
    let k = ((fraction * m as f64).round() as usize).clamp(1, m.max(1));
    if k >= m {
        return (0..m).collect();
    }
    let mut rng = rng::stream(seed, Purpose::ClientSelection, epoch as u64, 0);
    let mut picked = rand::seq::index::sample(&mut rng, m, k).into_vec();
    picked.sort_unstable();
    picked
}

/// `before + sum_i (|D_i| / sum |D|) * delta_i` over `members`, in the given order.
pub(crate) fn weighted_step<'a>(
    before: &ParamVector,
    members: impl IntoIterator<Item = (usize, &'a ParamVector)> + Clone,
) -> ParamVector {
    let total: usize = members.clone().into_iter().map(|(size, _)| size).sum();
    let mut out = before.clone();
    if total == 0 {
        return out;
    }
    let total = total as f64;
    for (size, grad) in members {
        out.axpy(size as f64 / total, grad);
    }
    out
}

/// FedAvg: data-size weighted mean of the participants' displacements.
pub fn fedavg_aggregate(
    global_before: &ParamVector,
    gradients: &BTreeMap<ClientId, ParamVector>,
    data_sizes: &[usize],
) -> Result<ParamVector> {
    if gradients.is_empty() {
        return Err(contract("FedAvg needs at least one participant"));
    }
    for (&c, g) in gradients {
        match data_sizes.get(c) {
            Some(&s) if s > 0 => {}
            _ => return Err(contract(format!("client {c} has no positive data size"))),
        }
        if g.dim() != global_before.dim() {
            return Err(contract(format!("client {c} gradient has wrong dimension")));
        }
    }
    Ok(weighted_step(
        global_before,
        gradients.iter().map(|(&c, g)| (data_sizes[c], g)),
    ))
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub clients: Vec<ClientConfig>,
    pub model_spec: ModelSpec,
    pub epochs: usize,
    pub fraction: f64,
    pub train: TrainConfig,
    pub validation: Dataset,
    pub aggregation: AggregationRule,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.model_spec.validate()?;
        if self.epochs == 0 {
            return Err(config("epochs must be at least 1"));
        }
        if self.clients.is_empty() {
            return Err(config("scenario has no clients"));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(config(format!("fraction must lie in (0, 1], got {}", self.fraction)));
        }
        for (idx, c) in self.clients.iter().enumerate() {
            if c.client_id != idx {
                return Err(config(format!("client at position {idx} has id {}", c.client_id)));
            }
            if c.data.is_empty() {
                return Err(config(format!("client {idx} has no data")));
            }
            if c.dishonest != c.poison_window.is_some() {
                return Err(config(format!("client {idx}: poison window must be set iff dishonest")));
            }
            if let Some((s, e)) = c.poison_window {
                if s > e || e > self.epochs {
                    return Err(config(format!("client {idx}: poison window ({s}, {e}) outside 1..={}", self.epochs)));
                }
            }
            if !(0.0..=1.0).contains(&c.flip_probability) {
                return Err(config(format!("client {idx}: flip probability outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Runs the training loop and records every epoch.
///
/// Participants train in parallel; results are merged in client-id order, so
/// the log does not depend on thread scheduling.
pub fn run_simulation(scenario: &Scenario) -> Result<GradientLog> {
    scenario.validate()?;
    let m = scenario.clients.len();
    let spec = &scenario.model_spec;
    let seed = scenario.seed;
    let initial = init_model(spec, rng::derive_seed(seed, Purpose::ModelInit, 0, 0))?;
    let data_sizes: Vec<usize> = scenario.clients.iter().map(|c| c.data.len()).collect();

    let mut epochs = Vec::with_capacity(scenario.epochs);
    let mut current = initial.clone();
    for t in 1..=scenario.epochs {
        let participants = select_clients(m, scenario.fraction, t, seed);
        let trained: Result<Vec<(ClientId, ParamVector)>> = participants
            .par_iter()
            .map(|&c| {
                let client = &scenario.clients[c];
                let poisoned;
                let data = if client.poisons_at(t) {
                    poisoned = poison_labels(
                        &client.data,
                        client.flip_probability,
                        rng::derive_seed(seed, Purpose::Poisoning, t as u64, c as u64),
                    );
                    &poisoned
                } else {
                    &client.data
                };
                let train_seed = rng::derive_seed(seed, Purpose::LocalTraining, t as u64, c as u64);
                local_train(&current, spec, data, &scenario.train, train_seed).map(|g| (c, g))
            })
            .collect();
        let gradients: BTreeMap<ClientId, ParamVector> = trained?.into_iter().collect();

        let mut record = EpochRecord {
            epoch: t,
            participants,
            gradients,
            data_sizes: data_sizes.clone(),
            global_before: current.clone(),
            global_after: ParamVector::zeros(0),
            aggregated: None,
        };
        match scenario.aggregation {
            AggregationRule::FedAvg => {
                record.global_after =
                    fedavg_aggregate(&record.global_before, &record.gradients, &record.data_sizes)?;
            }
            AggregationRule::Greedy { utility } => {
                let (best, model) = greedy_aggregate(&record, spec, utility, &scenario.validation)?;
                record.global_after = model;
                record.aggregated = Some(best.into_iter().collect::<BTreeSet<_>>().into_iter().collect());
            }
        }
        current = record.global_after.clone();
        epochs.push(record);
    }

    Ok(GradientLog {
        version: LOG_VERSION.to_string(),
        model_spec: spec.clone(),
        num_clients: m,
        aggregation: scenario.aggregation,
        initial_model: initial,
        epochs,
        validation: scenario.validation.clone(),
        meta: BTreeMap::new(),
    })
}
