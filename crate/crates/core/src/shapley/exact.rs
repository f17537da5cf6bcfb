use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::error::Result;
use crate::model::{ModelSpec, UtilitySpec};
use crate::sim::{ClientId, EpochRecord};

use super::game::EpochGame;

/// `|S|! (n - |S| - 1)! / n!` for every coalition size `|S|` in `0..n`.
pub(crate) fn coalition_weights(n: usize) -> Vec<f64> {
    // 1 / (n * C(n-1, s)), with the binomial built incrementally
    let mut weights = Vec::with_capacity(n);
    let mut binom = 1.0f64;
    for s in 0..n {
        weights.push(1.0 / (n as f64 * binom));
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }
    weights
}

/// Exact Shapley values of the game's players, in player order.
pub fn exact_game_shapley(game: &EpochGame<'_>) -> Vec<f64> {
    let n = game.num_players();
    if n == 0 {
        return Vec::new();
    }
    game.evaluate_all();
    let weights = coalition_weights(n);
    (0..n)
        .map(|j| {
            let bit = 1u32 << j;
            (0..=game.full_mask())
                .filter(|mask| mask & bit == 0)
                .map(|mask| {
                    weights[mask.count_ones() as usize] * (game.payoff(mask | bit) - game.payoff(mask))
                })
                .sum()
        })
        .collect()
}

/// Exact per-epoch Shapley values for every client `0..num_clients`.
///
/// Non-participants get exactly `0.0` and cost no evaluation. Returns the
/// values and the number of utility evaluations (`2^|I^(t)|`).
pub fn exact_epoch_shapley(
    record: &EpochRecord,
    spec: &ModelSpec,
    utility: UtilitySpec,
    validation: &Dataset,
    num_clients: usize,
) -> Result<(BTreeMap<ClientId, f64>, usize)> {
    let game = EpochGame::new(record, spec, validation, utility)?;
    let values = exact_game_shapley(&game);
    Ok((spread(&game, &values, num_clients), game.evaluations()))
}

/// Maps per-player values onto all clients, zero for non-participants.
pub(crate) fn spread(game: &EpochGame<'_>, values: &[f64], num_clients: usize) -> BTreeMap<ClientId, f64> {
    let mut out: BTreeMap<ClientId, f64> = (0..num_clients).map(|c| (c, 0.0)).collect();
    for (&c, &v) in game.players().iter().zip(values) {
        out.insert(c, v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_per_player_to_one() {
        // sum over s of C(n-1, s) * w(s) = 1
        for n in 1..12 {
            let w = coalition_weights(n);
            let mut binom = 1.0;
            let mut total = 0.0;
            for (s, ws) in w.iter().enumerate() {
                total += binom * ws;
                binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
