//! Decoupled Whittle indices, one per (arm, worker, state).
//!
//! The index of worker `k` at state `s` is the charge per unit cost that
//! makes the planner indifferent between acting with `k` and staying
//! passive in the restricted two-action MDP. It is found by bisection on the
//! greedy action of [`solve_restricted`].

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{solve_restricted, DpOptions};
use crate::error::Result;
use crate::model::{ArmMdp, Instance};

/// Entrywise tolerance for treating two workers' dynamics as equal.
pub const SAME_DYNAMICS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexOptions {
    /// Width of the final bisection bracket.
    pub tol: f64,
    pub dp: DpOptions,
}

impl IndexOptions {
    pub const DEFAULT_TOL: f64 = 1e-5;

    pub fn new(discount: f64) -> Self {
        Self {
            tol: Self::DEFAULT_TOL,
            dp: DpOptions::new(discount),
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_dp(mut self, dp: DpOptions) -> Self {
        self.dp = dp;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Decoupled,
    Adjusted,
}

/// `values[i][k][s]`: index of worker `k` on arm `i` in state `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexTable {
    pub kind: IndexKind,
    pub values: Vec<Vec<Vec<f64>>>,
}

impl IndexTable {
    pub fn get(&self, arm: usize, worker: usize, state: usize) -> f64 {
        self.values[arm][worker][state]
    }

    /// N x M matrix of indices at the given arm states.
    pub fn at_states(&self, states: &[usize]) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .zip(states)
            .map(|(per_worker, &s)| per_worker.iter().map(|col| col[s]).collect())
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("index tables always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Largest absolute entrywise difference to another table of equal shape.
    pub fn max_abs_diff(&self, other: &IndexTable) -> f64 {
        self.values
            .iter()
            .flatten()
            .flatten()
            .zip(other.values.iter().flatten().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Bisection bracket `(-d, d)` with `d = (max R - min R) / ((1 - discount) * cost)`.
///
/// At `d` the passive action is strictly better than acting in every state,
/// at `-d` acting is strictly better, so the crossing lies inside.
pub fn init_bs_bounds(arm: &ArmMdp, cost: f64, discount: f64) -> (f64, f64) {
    let d = arm.reward_spread() / ((1.0 - discount) * cost);
    (-d, d)
}

/// Decoupled Whittle index of worker action `action` at `state`.
///
/// Returns the midpoint of the final bracket, whose upper end leaves the
/// state passive and whose lower end keeps it active.
pub fn whittle_index(
    arm: &ArmMdp,
    action: usize,
    cost: f64,
    state: usize,
    opts: &IndexOptions,
) -> f64 {
    let (mut lb, mut ub) = init_bs_bounds(arm, cost, opts.dp.discount);
    while ub - lb > opts.tol {
        let mid = 0.5 * (lb + ub);
        let t = solve_restricted(arm, action, cost, mid, &opts.dp);
        if t.greedy[state] == action {
            lb = mid;
        } else {
            ub = mid;
        }
    }
    0.5 * (lb + ub)
}

/// Index of a worker whose dynamics equal those of a worker with index
/// `lambda` and cost `cost`: the product of index and cost is shared.
pub fn transfer_index(lambda: f64, cost: f64, cost_prime: f64) -> f64 {
    lambda * cost / cost_prime
}

/// States where staying passive is optimal at the given charge.
pub fn passive_set(
    arm: &ArmMdp,
    action: usize,
    cost: f64,
    charge: f64,
    dp: &DpOptions,
) -> BTreeSet<usize> {
    let t = solve_restricted(arm, action, cost, charge, dp);
    t.greedy
        .iter()
        .enumerate()
        .filter(|&(_, &a)| a == 0)
        .map(|(s, _)| s)
        .collect()
}

/// Counts how often the passive set shrinks between consecutive charges of
/// an increasing grid. Zero is consistent with indexability.
pub fn indexability_violations(
    arm: &ArmMdp,
    action: usize,
    cost: f64,
    grid: &[f64],
    dp: &DpOptions,
) -> usize {
    let sets: Vec<_> = grid
        .iter()
        .map(|&l| passive_set(arm, action, cost, l, dp))
        .collect();
    sets.windows(2).filter(|w| !w[0].is_subset(&w[1])).count()
}

/// Indices for one arm, `[k][s]`. Workers sharing dynamics with an earlier
/// worker reuse its column through [`transfer_index`].
pub fn arm_decoupled_indices(
    arm: &ArmMdp,
    costs_row: &[f64],
    opts: &IndexOptions,
) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(costs_row.len());
    for (k, &cost) in costs_row.iter().enumerate() {
        let twin = (0..k).find(|&prev| arm.same_dynamics(prev + 1, k + 1, SAME_DYNAMICS_TOL));
        let col = match twin {
            Some(prev) => cols[prev]
                .iter()
                .map(|&l| transfer_index(l, costs_row[prev], cost))
                .collect(),
            None => (0..arm.num_states())
                .map(|s| whittle_index(arm, k + 1, cost, s, opts))
                .collect(),
        };
        cols.push(col);
    }
    cols
}

/// Decoupled indices for every arm, worker and state.
pub fn decoupled_index_table(inst: &Instance, opts: &IndexOptions) -> IndexTable {
    let values = inst
        .arms
        .par_iter()
        .zip(&inst.costs)
        .map(|(arm, costs)| arm_decoupled_indices(arm, costs, opts))
        .collect();
    IndexTable {
        kind: IndexKind::Decoupled,
        values,
    }
}
