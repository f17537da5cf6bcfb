use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{contract, Result};
use crate::model::{evaluate_utility, ModelSpec, ParamVector, UtilitySpec};
use crate::sim::{weighted_step, ClientId, EpochRecord};

/// Largest participant count the subset cache accepts.
pub const MAX_PLAYERS: usize = 20;

/// The per-epoch cooperative game over the participants `I^(t)`.
///
/// Coalitions are bitmasks over `players` (bit `j` is `players[j]`). The
/// payoff of a coalition is the incremental utility of its reconstructed
/// sub-model over the previous global model, so the empty coalition pays 0.
/// Sub-model utilities are evaluated at most once per mask; the cache accepts
/// concurrent fills of distinct masks.
pub struct EpochGame<'a> {
    record: &'a EpochRecord,
    spec: &'a ModelSpec,
    validation: &'a Dataset,
    utility: UtilitySpec,
    players: Vec<ClientId>,
    cache: Vec<OnceLock<f64>>,
    evaluations: AtomicUsize,
}

impl<'a> EpochGame<'a> {
    pub fn new(
        record: &'a EpochRecord,
        spec: &'a ModelSpec,
        validation: &'a Dataset,
        utility: UtilitySpec,
    ) -> Result<Self> {
        // under greedy aggregation only the kept subset shaped F^(t)
        let players = record.aggregated.clone().unwrap_or_else(|| record.participants.clone());
        if players.len() > MAX_PLAYERS {
            return Err(contract(format!(
                "epoch {} has {} participants; exact subset enumeration is capped at {MAX_PLAYERS}",
                record.epoch,
                players.len()
            )));
        }
        // surfaces dimension errors once, before any parallel evaluation
        evaluate_utility(&record.global_before, spec, validation, utility)?;
        let cache = (0..1usize << players.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            record,
            spec,
            validation,
            utility,
            players,
            cache,
            evaluations: AtomicUsize::new(0),
        })
    }

    pub fn players(&self) -> &[ClientId] {
        &self.players
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn full_mask(&self) -> u32 {
        ((1u64 << self.players.len()) - 1) as u32
    }

    pub fn record(&self) -> &EpochRecord {
        self.record
    }

    /// Members of a coalition, ascending.
    pub fn members(&self, mask: u32) -> Vec<ClientId> {
        self.players
            .iter()
            .enumerate()
            .filter(|(j, _)| mask >> j & 1 == 1)
            .map(|(_, &c)| c)
            .collect()
    }

    /// `F^(t)_S` for the coalition `mask`.
    pub fn submodel(&self, mask: u32) -> ParamVector {
        let rec = self.record;
        weighted_step(
            &rec.global_before,
            self.players
                .iter()
                .enumerate()
                .filter(|(j, _)| mask >> j & 1 == 1)
                .map(|(_, c)| (rec.data_sizes[*c], &rec.gradients[c])),
        )
    }

    /// `v(F^(t)_S)`, cached.
    pub fn value(&self, mask: u32) -> f64 {
        *self.cache[mask as usize].get_or_init(|| {
            self.evaluations.fetch_add(1, Ordering::Relaxed);
            evaluate_utility(&self.submodel(mask), self.spec, self.validation, self.utility)
                .expect("dimensions were checked when the game was built")
        })
    }

    /// `u(S) = v(F^(t)_S) - v(F^(t-1))`.
    pub fn payoff(&self, mask: u32) -> f64 {
        if mask == 0 {
            return 0.0;
        }
        self.value(mask) - self.value(0)
    }

    /// Fills the whole cache in parallel.
    pub fn evaluate_all(&self) {
        (0..self.cache.len() as u32).into_par_iter().for_each(|mask| {
            self.value(mask);
        });
    }

    /// Number of distinct utility evaluations performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }
}
