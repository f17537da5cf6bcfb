//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use fedshap_core::intent::{
    cluster_clients, cumulative_series, detect_change_points, jaccard_honest_separation, window_mass,
    ChangePointPrior,
};
use fedshap_core::model::{evaluate_utility, ModelSpec, UtilitySpec};
use fedshap_core::schedule::{
    build_problem, solve_exhaustive, solve_one_sided, solve_two_sided_exact, solve_two_sided_lb, ObjectiveKind,
    Schedule,
};
use fedshap_core::shapley::{exact_epoch_shapley, exact_game_shapley, monte_carlo_shapley, mse_vs_exact, EpochGame};
use fedshap_core::sim::{run_simulation, AggregationRule, GradientLog};
use fedshap_core::{assess, ShapleyMethod};

use common::*;

const DECOMPOSITION_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-10;
const SCHEDULER_TOL: f64 = 1e-12;
const MC_RANGE_FRACTION: f64 = 1e-3;
const WINDOW_MASS_MIN: f64 = 0.8;
const JACCARD_MIN: f64 = 0.9;
const GRID_BUDGET: Duration = Duration::from_secs(120);
const DETECTION_BUDGET: Duration = Duration::from_secs(300);

/// Poisoning window used by the detection fixtures: the first five of twenty epochs.
const WINDOW: (usize, usize) = (1, 5);

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn exact(log: &GradientLog) -> fedshap_core::ContributionTimeline {
    assess(log, UtilitySpec::NegLoss, ShapleyMethod::Exact, None).unwrap()
}

fn grid() -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for m in [3, 4, 6] {
        for t in [5, 12] {
            for f in [0.5, 1.0] {
                out.push((m, t, f));
            }
        }
    }
    out
}

fn decomposability() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (idx, (m, t, f)) in grid().into_iter().enumerate() {
        let log = run_simulation(&scenario(m, t, f, idx as u64)).unwrap();
        let tl = exact(&log);
        let total_err = (tl.totals().iter().sum::<f64>() - tl.incremental.final_value).abs();
        worst = worst.max(total_err);
        check(total_err <= DECOMPOSITION_TOL, || format!("m={m} T={t} f={f}: total error {total_err:e}"))?;
        for e in 1..=t {
            let sum: f64 = (0..m).map(|c| tl.value(c, e).unwrap()).sum();
            let err = (sum - tl.incremental.deltas[e - 1]).abs();
            worst = worst.max(err);
            check(err <= DECOMPOSITION_TOL, || format!("m={m} T={t} f={f} epoch {e}: error {err:e}"))?;
        }
    }
    let elapsed = start.elapsed();
    check(elapsed <= GRID_BUDGET, || format!("grid took {elapsed:?}"))?;
    Ok(format!("12 scenarios, worst error {worst:.1e}, {:.1}s", elapsed.as_secs_f64()))
}

fn non_participant_zero() -> Outcome {
    let mut checked = 0;
    for (idx, (m, t, f)) in grid().into_iter().enumerate() {
        let log = run_simulation(&scenario(m, t, f, idx as u64)).unwrap();
        let tl = exact(&log);
        for (e, rec) in log.epochs.iter().enumerate() {
            for c in (0..m).filter(|c| !rec.is_participant(*c)) {
                check(tl.value(c, e + 1) == Some(0.0), || format!("client {c} epoch {} nonzero", e + 1))?;
                checked += 1;
            }
        }
    }
    // one client is selected per epoch, so at least three of six never take part
    let log = run_simulation(&scenario(6, 3, 1.0 / 6.0, 42)).unwrap();
    let tl = exact(&log);
    let absent: Vec<usize> = (0..6).filter(|c| log.epochs.iter().all(|e| !e.is_participant(*c))).collect();
    check(absent.len() >= 3, || "expected never-selected clients".into())?;
    for &c in &absent {
        let expected = tl.incremental.base / 6.0;
        check(tl.total(c) == expected, || format!("client {c}: total {} != v0/m {expected}", tl.total(c)))?;
    }
    Ok(format!("{checked} non-participant cells exactly 0; {} never-selected clients at v0/m", absent.len()))
}

fn permutation_oracle_equivalence() -> Outcome {
    let spec = ModelSpec::logistic(2, 2);
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    let mut epochs = 0;
    for trial in 0..30 {
        let rec = random_record(8, 1 + trial % 6, &mut r);
        let val = validation_set(trial as u64);
        let (phi, _) = exact_epoch_shapley(&rec, &spec, UtilitySpec::NegLoss, &val, 8).unwrap();
        let oracle = permutation_oracle(&rec, &spec, &val, UtilitySpec::NegLoss, 8);
        for c in 0..8 {
            worst = worst.max((phi[&c] - oracle[c]).abs());
        }
        epochs += 1;
    }
    let log = run_simulation(&scenario(6, 12, 1.0, 7)).unwrap();
    for rec in &log.epochs {
        let (phi, _) = exact_epoch_shapley(rec, &log.model_spec, UtilitySpec::Accuracy, &log.validation, 6).unwrap();
        let oracle = permutation_oracle(rec, &log.model_spec, &log.validation, UtilitySpec::Accuracy, 6);
        for c in 0..6 {
            worst = worst.max((phi[&c] - oracle[c]).abs());
        }
        epochs += 1;
    }
    check(worst <= ORACLE_TOL, || format!("max deviation {worst:e}"))?;
    Ok(format!("{epochs} epochs, max deviation {worst:.1e}"))
}

fn complexity_ledger() -> Outcome {
    let log = run_simulation(&scenario(6, 12, 0.5, 3)).unwrap();
    let mut lines = Vec::new();
    for k in [0, 3, 6, 12] {
        let problem = build_problem(&log, UtilitySpec::NegLoss, k, 0.5).unwrap().normalized(true);
        let schedules: [(&str, Schedule); 3] = [
            ("one-sided", solve_one_sided(&problem).unwrap()),
            ("two-sided", solve_two_sided_exact(&problem).unwrap()),
            ("lb", solve_two_sided_lb(&problem).unwrap()),
        ];
        for (name, s) in schedules {
            let tl = assess(&log, UtilitySpec::NegLoss, ShapleyMethod::Exact, Some(&s)).unwrap();
            check(tl.computed_epochs().len() <= k, || format!("{name} k={k}: {} epochs", tl.computed_epochs().len()))?;
            for (idx, rec) in log.epochs.iter().enumerate() {
                let expected = if s.z[idx] { 1usize << rec.participants.len() } else { 0 };
                check(tl.evaluations[idx] == expected, || {
                    format!("{name} k={k} epoch {}: {} evaluations, expected {expected}", idx + 1, tl.evaluations[idx])
                })?;
            }
            lines.push(tl.total_evaluations());
        }
    }
    Ok(format!("evaluations = 2^|I| on every scheduled epoch; totals {lines:?}"))
}

fn monte_carlo_convergence() -> Outcome {
    let log = run_simulation(&scenario(8, 3, 0.5, 11)).unwrap();
    let rec = &log.epochs[2];
    let game = EpochGame::new(rec, &log.model_spec, &log.validation, UtilitySpec::NegLoss).unwrap();
    check(game.num_players() == 4, || "fixture must have 4 participants".into())?;
    let exact = exact_game_shapley(&game);
    let payoffs: Vec<f64> = (0..16u32).map(|mask| game.payoff(mask)).collect();
    let range = payoffs.iter().copied().fold(f64::MIN, f64::max) - payoffs.iter().copied().fold(f64::MAX, f64::min);
    let mse_at = |samples: usize| {
        (0..10u64)
            .map(|seed| {
                let est = monte_carlo_shapley(&game, samples, seed, false);
                est.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 4.0
            })
            .sum::<f64>()
            / 10.0
    };
    let (m50, m500, m5000) = (mse_at(50), mse_at(500), mse_at(5000));
    let detail = format!("MSE 50/500/5000 = {m50:.2e}/{m500:.2e}/{m5000:.2e}, range² = {:.2e}", range * range);
    check(m5000 <= m500 && m500 <= m50, || format!("not monotone: {detail}"))?;
    check(m5000 <= MC_RANGE_FRACTION * range * range, || format!("too large: {detail}"))?;
    Ok(detail)
}

fn scheduler_optimality() -> Outcome {
    let mut r = rng(99);
    for round in 0..100 {
        let problem = random_problem(&mut r, 12, round % 2 == 1);
        let oracle = OracleObjective { problem: &problem };
        let solved = [
            (ObjectiveKind::OneSided, solve_one_sided(&problem).unwrap()),
            (ObjectiveKind::TwoSided, solve_two_sided_exact(&problem).unwrap()),
            (ObjectiveKind::TwoSidedLb, solve_two_sided_lb(&problem).unwrap()),
        ];
        for (kind, s) in solved {
            let best = oracle.optimum(kind);
            let ex = solve_exhaustive(&problem, kind).unwrap().objective_value;
            check(s.selected() <= problem.budget, || format!("round {round}: budget violated"))?;
            check((s.objective_value - best).abs() <= SCHEDULER_TOL && (ex - best).abs() <= SCHEDULER_TOL, || {
                format!("round {round} {kind:?}: solver {} exhaustive {ex} oracle {best}", s.objective_value)
            })?;
        }
    }
    use rand::Rng;
    for pair in 0..1000 {
        let problem = random_problem(&mut r, 12, pair % 2 == 0);
        let z: Vec<bool> = (0..problem.epochs).map(|_| r.random_bool(0.5)).collect();
        let oracle = OracleObjective { problem: &problem };
        let (lb, two) = (oracle.value(&z, ObjectiveKind::TwoSidedLb), oracle.value(&z, ObjectiveKind::TwoSided));
        check(lb <= two + SCHEDULER_TOL, || format!("pair {pair}: LB {lb} > two-sided {two}"))?;
    }
    Ok("100 problems x 3 solvers optimal; LB dominance on 1000 pairs".into())
}

fn budget_tradeoff() -> Outcome {
    let ratios = [0.25, 0.5, 0.75, 1.0];
    let mut means = vec![0.0; ratios.len()];
    let mut residual_at_full: f64 = 0.0;
    for seed in 0..5 {
        let log = run_simulation(&scenario(8, 20, 0.5, seed)).unwrap();
        let full = exact(&log);
        for (j, r) in ratios.iter().enumerate() {
            let k = (20.0 * r) as usize;
            let problem = build_problem(&log, UtilitySpec::NegLoss, k, 0.5).unwrap().normalized(true);
            let s = solve_one_sided(&problem).unwrap();
            let tl = assess(&log, UtilitySpec::NegLoss, ShapleyMethod::Exact, Some(&s)).unwrap();
            means[j] += mse_vs_exact(&tl, &full).unwrap() / 5.0;
            if k == 20 {
                residual_at_full = residual_at_full.max(tl.residual().abs());
            }
        }
    }
    let detail = format!("mean MSE over k/T {ratios:?} = {:?}", means.iter().map(|m| format!("{m:.2e}")).collect::<Vec<_>>());
    check(means.windows(2).all(|w| w[1] <= w[0]), || format!("not non-increasing: {detail}"))?;
    check(means[3] == 0.0 && residual_at_full == 0.0, || format!("nonzero at k = T: {detail}"))?;
    Ok(detail)
}

fn detection_mass(flip: f64, seed: u64) -> f64 {
    let log = run_simulation(&poisoned(4, 20, 0.5, &[0], WINDOW, flip, seed)).unwrap();
    let series = cumulative_series(&exact(&log)).unwrap();
    let post = detect_change_points(&series[0], ChangePointPrior::default()).unwrap();
    window_mass(&post, WINDOW).unwrap()
}

fn dishonest_detection() -> Outcome {
    let start = Instant::now();
    let mean = |flip: f64| (0..5).map(|seed| detection_mass(flip, seed)).sum::<f64>() / 5.0;
    let (at05, at07) = (mean(0.5), mean(0.7));
    let elapsed = start.elapsed();
    let detail = format!("in-window mass flip 0.5 = {at05:.3}, flip 0.7 = {at07:.3}, {:.1}s", elapsed.as_secs_f64());
    check(at05 >= WINDOW_MASS_MIN, || format!("below {WINDOW_MASS_MIN}: {detail}"))?;
    check(at07 >= at05, || format!("mass decreased with flip: {detail}"))?;
    check(elapsed <= DETECTION_BUDGET, || format!("too slow: {detail}"))?;
    Ok(detail)
}

fn honest_separation() -> Outcome {
    let honest: BTreeSet<usize> = (1..8).collect();
    let mut means = Vec::new();
    for flip in [0.25, 0.5, 0.75, 1.0] {
        let mut sum = 0.0;
        for seed in 0..10 {
            let log = run_simulation(&poisoned(8, 20, 0.5, &[0], WINDOW, flip, seed)).unwrap();
            let series = cumulative_series(&exact(&log)).unwrap();
            let a = cluster_clients(&series, 2, seed).unwrap();
            sum += jaccard_honest_separation(&a, &honest).unwrap();
        }
        means.push(sum / 10.0);
    }
    let detail = format!("mean Jaccard at flip 0.25/0.5/0.75/1.0 = {:?}", means.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>());
    check(means.windows(2).all(|w| w[1] >= w[0]), || format!("not non-decreasing: {detail}"))?;
    check(means[3] >= JACCARD_MIN, || format!("below {JACCARD_MIN}: {detail}"))?;
    Ok(detail)
}

fn greedy_aggregation() -> Outcome {
    let mut pairs = Vec::new();
    for seed in 0..5 {
        let fedavg = poisoned(4, 20, 1.0, &[0], (1, 20), 1.0, seed);
        let mut greedy = fedavg.clone();
        greedy.aggregation = AggregationRule::Greedy { utility: UtilitySpec::NegLoss };
        let loss = |s: &fedshap_core::Scenario| {
            let log = run_simulation(s).unwrap();
            -evaluate_utility(log.final_model(), &s.model_spec, &s.validation, UtilitySpec::NegLoss).unwrap()
        };
        let (a, b) = (loss(&fedavg), loss(&greedy));
        check(b <= a, || format!("seed {seed}: greedy {b:.4} > FedAvg {a:.4}"))?;
        pairs.push(format!("{b:.3}<={a:.3}"));
    }
    Ok(format!("final validation loss greedy<=FedAvg: {}", pairs.join(", ")))
}

fn reproducibility() -> Outcome {
    let s = poisoned(6, 8, 0.5, &[1, 4], (2, 5), 0.7, 31);
    let (a, b) = (run_simulation(&s).unwrap(), run_simulation(&s).unwrap());
    let (ja, jb) = (a.to_json().unwrap(), b.to_json().unwrap());
    check(ja == jb, || "gradient logs differ".into())?;
    let reparsed = GradientLog::from_json(&ja).unwrap().to_json().unwrap();
    check(reparsed == ja, || "log does not survive a parse/serialise cycle".into())?;
    let meta = BTreeMap::new();
    let (ta, tb) = (exact(&a), exact(&b));
    check(ta.to_csv(&meta) == tb.to_csv(&meta), || "timeline CSVs differ".into())?;
    let (sa, sb) = (serde_json::to_string(&ta).unwrap(), serde_json::to_string(&tb).unwrap());
    check(sa == sb, || "timeline JSON differs".into())?;
    let mc = ShapleyMethod::monte_carlo(64, 5);
    let (ma, mb) = (
        assess(&a, UtilitySpec::Accuracy, mc.clone(), None).unwrap(),
        assess(&b, UtilitySpec::Accuracy, mc, None).unwrap(),
    );
    check(ma == mb, || "Monte-Carlo timelines differ".into())?;
    Ok(format!("log {} bytes and timelines byte-identical across runs", ja.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("decomposability suite", decomposability),
        ("non-participant zero", non_participant_zero),
        ("permutation-oracle equivalence", permutation_oracle_equivalence),
        ("complexity ledger", complexity_ledger),
        ("Monte-Carlo convergence", monte_carlo_convergence),
        ("scheduler optimality", scheduler_optimality),
        ("budget/accuracy trade-off", budget_tradeoff),
        ("dishonest-client detection", dishonest_detection),
        ("honest-client separation", honest_separation),
        ("greedy aggregation", greedy_aggregation),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} [PRIMARY] {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} [PRIMARY] {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
