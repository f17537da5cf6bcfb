//! Fixtures for the `engine` benchmarks.

use fedshap_core::data::{make_synthetic, partition_noniid};
use fedshap_core::rng::{stream, Purpose};
use fedshap_core::sim::{run_simulation, AggregationRule};
use fedshap_core::{ClientConfig, GradientLog, ModelSpec, Scenario, ScheduleProblem, TrainConfig};
use rand::Rng;

/// A short full-participation run with `m` clients on 2-class synthetic data.
pub fn full_participation_log(m: usize, epochs: usize, seed: u64) -> GradientLog {
    let source = make_synthetic(2, 60 * m, 2, 3.0, seed).expect("valid synthetic shape");
    let clients = partition_noniid(&source, m, 1.0, seed)
        .expect("enough rows")
        .into_iter()
        .enumerate()
        .map(|(i, d)| ClientConfig::honest(i, d))
        .collect();
    let scenario = Scenario {
        clients,
        model_spec: ModelSpec::logistic(2, 2),
        epochs,
        fraction: 1.0,
        train: TrainConfig { local_epochs: 2, batch_size: 32, learning_rate: 0.1 },
        validation: make_synthetic(2, 200, 2, 3.0, seed + 1).expect("valid synthetic shape"),
        aggregation: AggregationRule::FedAvg,
        seed,
    };
    run_simulation(&scenario).expect("valid scenario")
}

/// Random scheduling problem over `epochs` epochs with half of `m` clients per epoch.
pub fn random_problem(epochs: usize, m: usize, budget: usize, seed: u64) -> ScheduleProblem {
    let mut rng = stream(seed, Purpose::Synthetic, 0, 0);
    let deltas: Vec<f64> = (0..epochs).map(|_| rng.random_range(-0.2..1.0)).collect();
    let participants: Vec<Vec<usize>> = (0..epochs)
        .map(|_| (0..m).filter(|_| rng.random_bool(0.5)).collect())
        .collect();
    let x = ScheduleProblem::participation_rates(&participants, m);
    ScheduleProblem::new(ScheduleProblem::epoch_weights(&deltas), x, budget, 1.0).expect("valid problem")
}

/// Cumulative contribution-like series with a slope change at `knee`.
pub fn kinked_series(len: usize, knee: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Synthetic, 0, 1);
    let mut acc = 0.0;
    (0..len)
        .map(|t| {
            acc += if t < knee { 0.1 } else { -0.05 } + rng.random_range(-0.01..0.01);
            acc
        })
        .collect()
}
