//! Budgeted selection of the epochs in which Shapley values are computed.
//!
//! Three objectives over a binary epoch vector `z` with `Σ z ≤ k`:
//!
//! * one-sided: `Σ_t (p_t + γ Σ_i x_it) z_t`
//! * two-sided: `Σ_t p_t z_t − γ Σ_{i<i'} |Σ_t (x_it − x_i't) z_t|`
//! * two-sided lower bound: `Σ_t (p_t − γ Σ_{i<i'} |x_it − x_i't|) z_t`
//!
//! `p` is the normalised absolute incremental utility per epoch and `x_i` a
//! client's participation indicator normalised to sum to one. The one-sided
//! and lower-bound objectives are separable and solved by ranking; the
//! two-sided objective is solved by branch-and-bound.

use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Error, Result};
use crate::model::UtilitySpec;
use crate::shapley::IncrementalUtility;
use crate::sim::GradientLog;

/// Default epoch cap for [`solve_two_sided_exact`].
pub const EXACT_SOLVE_CAP: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    OneSided,
    TwoSided,
    TwoSidedLb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    OneSided,
    TwoSidedExact,
    TwoSidedLb,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimality {
    ProvedOptimal,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleProblem {
    pub epochs: usize,
    pub budget: usize,
    pub gamma: f64,
    /// Epoch weights, summing to one.
    pub p: Vec<f64>,
    /// `x[client][epoch]`, each participating client's row summing to one.
    pub x: Vec<Vec<f64>>,
    /// Divide the coverage term by its best value over `k` epochs and the
    /// fairness term by its value at `z = 1`.
    pub normalize_terms: bool,
}

impl ScheduleProblem {
    pub fn new(p: Vec<f64>, x: Vec<Vec<f64>>, budget: usize, gamma: f64) -> Result<Self> {
        let problem = Self {
            epochs: p.len(),
            budget,
            gamma,
            p,
            x,
            normalize_terms: false,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalize_terms = on;
        self
    }

    /// Participation rates from per-epoch participant lists (epoch `t` at index `t - 1`).
    pub fn participation_rates(participants: &[Vec<usize>], num_clients: usize) -> Vec<Vec<f64>> {
        let epochs = participants.len();
        let mut x = vec![vec![0.0; epochs]; num_clients];
        for (t, members) in participants.iter().enumerate() {
            for &c in members {
                x[c][t] = 1.0;
            }
        }
        for row in x.iter_mut() {
            let count: f64 = row.iter().sum();
            if count > 0.0 {
                row.iter_mut().for_each(|v| *v /= count);
            }
        }
        x
    }

    /// `|δv| / Σ|δv|`, or uniform when every increment is zero.
    pub fn epoch_weights(deltas: &[f64]) -> Vec<f64> {
        let total: f64 = deltas.iter().map(|d| d.abs()).sum();
        if total > 0.0 && total.is_finite() {
            deltas.iter().map(|d| d.abs() / total).collect()
        } else {
            vec![1.0 / deltas.len().max(1) as f64; deltas.len()]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.len() != self.epochs {
            return Err(contract("epoch weight vector has the wrong length"));
        }
        if self.budget > self.epochs {
            return Err(config(format!("budget k = {} exceeds T = {}", self.budget, self.epochs)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(config(format!("gamma must be finite and non-negative, got {}", self.gamma)));
        }
        if self.x.iter().any(|row| row.len() != self.epochs) {
            return Err(contract("participation matrix has the wrong width"));
        }
        Ok(())
    }

    fn coverage_norm(&self) -> f64 {
        if !self.normalize_terms {
            return 1.0;
        }
        let mut sorted = self.p.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let best: f64 = sorted.iter().take(self.budget).sum();
        if best > 0.0 {
            best
        } else {
            1.0
        }
    }

    fn exposure_norm(&self) -> f64 {
        if !self.normalize_terms {
            return 1.0;
        }
        let all: f64 = self.x.iter().flatten().sum();
        if all > 0.0 {
            all
        } else {
            1.0
        }
    }

    /// Shared by both two-sided objectives so the lower bound stays a lower bound.
    fn imbalance_norm(&self) -> f64 {
        if !self.normalize_terms {
            return 1.0;
        }
        let all: f64 = self.epoch_imbalance().iter().sum();
        if all > 0.0 {
            all
        } else {
            1.0
        }
    }

    /// `Σ_{i<i'} |x_it − x_i't|` per epoch.
    pub fn epoch_imbalance(&self) -> Vec<f64> {
        (0..self.epochs)
            .map(|t| {
                let col: Vec<f64> = self.x.iter().map(|row| row[t]).collect();
                pairwise_abs_sum(col)
            })
            .collect()
    }

    /// Per-epoch scores of the separable objectives.
    fn separable_scores(&self, kind: ObjectiveKind) -> Vec<f64> {
        let cn = self.coverage_norm();
        match kind {
            ObjectiveKind::OneSided => {
                let en = self.exposure_norm();
                (0..self.epochs)
                    .map(|t| {
                        let exposure: f64 = self.x.iter().map(|row| row[t]).sum();
                        self.p[t] / cn + self.gamma * exposure / en
                    })
                    .collect()
            }
            ObjectiveKind::TwoSidedLb => {
                let inorm = self.imbalance_norm();
                self.epoch_imbalance()
                    .iter()
                    .zip(&self.p)
                    .map(|(imb, p)| p / cn - self.gamma * imb / inorm)
                    .collect()
            }
            ObjectiveKind::TwoSided => unreachable!("two-sided objective is not separable"),
        }
    }
}

/// `Σ_{i<j} |a_i − a_j|` in `O(n log n)`.
fn pairwise_abs_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    values
        .iter()
        .enumerate()
        .map(|(j, v)| v * (2.0 * j as f64 - (n as f64 - 1.0)))
        .sum()
}

/// Builds the scheduling problem from a recorded run.
pub fn build_problem(log: &GradientLog, utility: UtilitySpec, budget: usize, gamma: f64) -> Result<ScheduleProblem> {
    if log.num_epochs() == 0 {
        return Err(contract("gradient log has no epochs"));
    }
    let inc = IncrementalUtility::from_log(log, utility)?;
    let participants: Vec<Vec<usize>> = log.epochs.iter().map(|e| e.participants.clone()).collect();
    ScheduleProblem::new(
        ScheduleProblem::epoch_weights(&inc.deltas),
        ScheduleProblem::participation_rates(&participants, log.num_clients),
        budget,
        gamma,
    )
}

/// Value of `kind`'s objective at `z`.
pub fn evaluate_objective(problem: &ScheduleProblem, z: &[bool], kind: ObjectiveKind) -> Result<f64> {
    if z.len() != problem.epochs {
        return Err(contract(format!("z has length {}, expected {}", z.len(), problem.epochs)));
    }
    let cn = problem.coverage_norm();
    let coverage: f64 = z.iter().zip(&problem.p).filter(|(on, _)| **on).map(|(_, p)| p).sum::<f64>() / cn;
    Ok(match kind {
        ObjectiveKind::OneSided => {
            let exposure: f64 = problem
                .x
                .iter()
                .map(|row| row.iter().zip(z).filter(|(_, on)| **on).map(|(x, _)| x).sum::<f64>())
                .sum();
            coverage + problem.gamma * exposure / problem.exposure_norm()
        }
        ObjectiveKind::TwoSided => {
            let exposures: Vec<f64> = problem
                .x
                .iter()
                .map(|row| row.iter().zip(z).filter(|(_, on)| **on).map(|(x, _)| x).sum())
                .collect();
            let mut penalty = 0.0;
            for i in 0..exposures.len() {
                for j in i + 1..exposures.len() {
                    penalty += (exposures[i] - exposures[j]).abs();
                }
            }
            coverage - problem.gamma * penalty / problem.imbalance_norm()
        }
        ObjectiveKind::TwoSidedLb => {
            let imbalance: f64 = problem
                .epoch_imbalance()
                .iter()
                .zip(z)
                .filter(|(_, on)| **on)
                .map(|(v, _)| v)
                .sum();
            coverage - problem.gamma * imbalance / problem.imbalance_norm()
        }
    })
}

/// A chosen set of epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub z: Vec<bool>,
    pub budget: usize,
    pub gamma: f64,
    pub objective: ObjectiveKind,
    pub objective_value: f64,
    pub solver: SolverKind,
    pub optimality: Optimality,
}

impl Schedule {
    /// Computes every epoch.
    pub fn full(epochs: usize) -> Self {
        Self {
            z: vec![true; epochs],
            budget: epochs,
            gamma: 0.0,
            objective: ObjectiveKind::OneSided,
            objective_value: f64::NAN,
            solver: SolverKind::Exhaustive,
            optimality: Optimality::Heuristic,
        }
    }

    pub fn selected(&self) -> usize {
        self.z.iter().filter(|b| **b).count()
    }

    /// Selected epochs, 1-based.
    pub fn epochs(&self) -> Vec<usize> {
        self.z.iter().enumerate().filter(|(_, b)| **b).map(|(t, _)| t + 1).collect()
    }
}

/// Top `limit` indices by score, earlier epoch first on ties, keeping only scores accepted by `keep`.
fn top_by_score(scores: &[f64], limit: usize, keep: impl Fn(f64) -> bool) -> Vec<bool> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut z = vec![false; scores.len()];
    for &t in order.iter().filter(|&&t| keep(scores[t])).take(limit) {
        z[t] = true;
    }
    z
}

fn finish(problem: &ScheduleProblem, z: Vec<bool>, objective: ObjectiveKind, solver: SolverKind) -> Result<Schedule> {
    let objective_value = evaluate_objective(problem, &z, objective)?;
    Ok(Schedule {
        z,
        budget: problem.budget,
        gamma: problem.gamma,
        objective,
        objective_value,
        solver,
        optimality: Optimality::ProvedOptimal,
    })
}

/// One-sided schedule: the `k` best epochs by separable score.
pub fn solve_one_sided(problem: &ScheduleProblem) -> Result<Schedule> {
    problem.validate()?;
    let scores = problem.separable_scores(ObjectiveKind::OneSided);
    let z = top_by_score(&scores, problem.budget, |_| true);
    finish(problem, z, ObjectiveKind::OneSided, SolverKind::OneSided)
}

/// Lower-bound two-sided schedule: up to `k` epochs with the best
/// non-negative adjusted scores.
pub fn solve_two_sided_lb(problem: &ScheduleProblem) -> Result<Schedule> {
    problem.validate()?;
    let scores = problem.separable_scores(ObjectiveKind::TwoSidedLb);
    let z = top_by_score(&scores, problem.budget, |s| s >= 0.0);
    finish(problem, z, ObjectiveKind::TwoSidedLb, SolverKind::TwoSidedLb)
}

/// Exact two-sided schedule with the default epoch cap.
pub fn solve_two_sided_exact(problem: &ScheduleProblem) -> Result<Schedule> {
    solve_two_sided_exact_with_cap(problem, EXACT_SOLVE_CAP)
}

struct Search<'a> {
    problem: &'a ScheduleProblem,
    /// `suffix_best[t]`: weights of epochs `t..`, sorted descending.
    suffix_best: Vec<Vec<f64>>,
    coverage_norm: f64,
    penalty_scale: f64,
    z: Vec<bool>,
    exposures: Vec<f64>,
    best: Option<(f64, Vec<bool>)>,
}

impl Search<'_> {
    fn leaf(&mut self, gain: f64) {
        let value = gain / self.coverage_norm - self.penalty_scale * pairwise_abs_sum(self.exposures.clone());
        // strict improvement only: the first optimum met selects the earliest epochs
        if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
            self.best = Some((value, self.z.clone()));
        }
    }

    fn visit(&mut self, t: usize, chosen: usize, gain: f64) {
        let remaining = self.problem.budget - chosen;
        if t == self.problem.epochs || remaining == 0 {
            self.leaf(gain);
            return;
        }
        if let Some((best, _)) = &self.best {
            let optimistic: f64 = self.suffix_best[t].iter().take(remaining).sum();
            // the penalty is never negative
            if (gain + optimistic) / self.coverage_norm <= *best {
                return;
            }
        }
        self.z[t] = true;
        for (e, row) in self.exposures.iter_mut().zip(&self.problem.x) {
            *e += row[t];
        }
        self.visit(t + 1, chosen + 1, gain + self.problem.p[t]);
        self.z[t] = false;
        for (e, row) in self.exposures.iter_mut().zip(&self.problem.x) {
            *e -= row[t];
        }
        self.visit(t + 1, chosen, gain);
    }
}

/// Branch-and-bound over `z` for the two-sided objective. Bound: the gain of
/// the largest remaining weights that still fit the budget, with zero penalty.
pub fn solve_two_sided_exact_with_cap(problem: &ScheduleProblem, cap: usize) -> Result<Schedule> {
    problem.validate()?;
    if problem.epochs > cap {
        return Err(Error::ExactSolveCap { cap, epochs: problem.epochs });
    }
    let suffix_best = (0..=problem.epochs)
        .map(|t| {
            let mut rest = problem.p[t..].to_vec();
            rest.sort_by(|a, b| b.total_cmp(a));
            rest
        })
        .collect();
    let mut search = Search {
        problem,
        suffix_best,
        coverage_norm: problem.coverage_norm(),
        penalty_scale: problem.gamma / problem.imbalance_norm(),
        z: vec![false; problem.epochs],
        exposures: vec![0.0; problem.x.len()],
        best: None,
    };
    search.visit(0, 0, 0.0);
    let (_, z) = search.best.expect("the all-zero leaf is always reached");
    finish(problem, z, ObjectiveKind::TwoSided, SolverKind::TwoSidedExact)
}

/// Enumerates every feasible `z` (`T ≤ 24`). Ties go to the schedule that
/// selects earlier epochs.
pub fn solve_exhaustive(problem: &ScheduleProblem, kind: ObjectiveKind) -> Result<Schedule> {
    problem.validate()?;
    let t_max = problem.epochs;
    if t_max > 24 {
        return Err(config(format!("exhaustive enumeration limited to 24 epochs, got {t_max}")));
    }
    let mut best: Option<(f64, Vec<bool>)> = None;
    // bit (T-1-t) encodes epoch t, so descending masks visit z in descending lexicographic order
    for mask in (0u32..1 << t_max).rev() {
        if mask.count_ones() as usize > problem.budget {
            continue;
        }
        let z: Vec<bool> = (0..t_max).map(|t| mask >> (t_max - 1 - t) & 1 == 1).collect();
        let value = evaluate_objective(problem, &z, kind)?;
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, z));
        }
    }
    let (_, z) = best.expect("z = 0 is always feasible");
    finish(problem, z, kind, SolverKind::Exhaustive)
}
