use crate::data::Dataset;
use crate::error::{contract, Result};
use crate::model::{ModelSpec, ParamVector, UtilitySpec};
use crate::sim::{ClientId, EpochRecord};

use super::game::EpochGame;

/// Coalition with the largest payoff; ties go to the smaller coalition, then
/// to the lexicographically smaller member list. The empty coalition (payoff 0)
/// is a candidate.
pub fn best_coalition(game: &EpochGame<'_>) -> u32 {
    game.evaluate_all();
    let mut masks: Vec<u32> = (0..=game.full_mask()).collect();
    masks.sort_by_cached_key(|&m| (m.count_ones(), game.members(m)));
    let mut best = masks[0];
    let mut best_payoff = game.payoff(best);
    for &m in &masks[1..] {
        let p = game.payoff(m);
        if p > best_payoff {
            best = m;
            best_payoff = p;
        }
    }
    best
}

/// Picks the participant subset whose sub-model has the best validation
/// utility and returns it with the reconstructed model.
pub fn greedy_aggregate(
    record: &EpochRecord,
    spec: &ModelSpec,
    utility: UtilitySpec,
    validation: &Dataset,
) -> Result<(Vec<ClientId>, ParamVector)> {
    if record.participants.is_empty() {
        return Err(contract("greedy aggregation needs at least one participant"));
    }
    let game = EpochGame::new(record, spec, validation, utility)?;
    let best = best_coalition(&game);
    Ok((game.members(best), game.submodel(best)))
}
