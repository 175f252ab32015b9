//! Adjusted indices that account for the other workers.
//!
//! The adjusted index of worker `k` at state `s` is the smallest charge on
//! `k` at which the expanded MDP, with the other workers charged at fixed
//! values, stops choosing `k` at `s`. The action it switches to (another
//! worker or the passive action) is reported as the pivot.

use rayon::prelude::*;

use crate::decoupled::{init_bs_bounds, IndexKind, IndexOptions, IndexTable};
use crate::dp::{evaluate_policy, solve_expanded, ChargeVector, ValueTable};
use crate::error::{Error, Result};
use crate::model::{ArmMdp, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchOutcome {
    /// The greedy action at `s` switches inside the bracket.
    Bracketed,
    /// The worker is never greedy, even at the lower bound.
    DegenerateLow,
    /// The worker stays greedy even at the upper bound.
    DegenerateHigh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustedIndex {
    pub value: f64,
    /// Action chosen just above the crossing.
    pub pivot: usize,
    pub outcome: SearchOutcome,
}

/// Adjusted index of worker action `action` at `state`.
///
/// `fixed` holds the charges of all workers; the entry for `action` is
/// ignored and searched over the bounds of [`init_bs_bounds`].
pub fn adjusted_index(
    arm: &ArmMdp,
    costs_row: &[f64],
    state: usize,
    action: usize,
    fixed: &ChargeVector,
    opts: &IndexOptions,
) -> AdjustedIndex {
    let k = action - 1;
    let probe = |l: f64| -> usize {
        solve_expanded(arm, costs_row, &fixed.with(k, l), &opts.dp).greedy[state]
    };
    let (mut lb, mut ub) = init_bs_bounds(arm, costs_row[k], opts.dp.discount);

    let at_lb = probe(lb);
    if at_lb != action {
        return AdjustedIndex {
            value: lb,
            pivot: at_lb,
            outcome: SearchOutcome::DegenerateLow,
        };
    }
    let mut pivot = probe(ub);
    if pivot == action {
        return AdjustedIndex {
            value: ub,
            pivot: action,
            outcome: SearchOutcome::DegenerateHigh,
        };
    }
    while ub - lb > opts.tol {
        let mid = 0.5 * (lb + ub);
        let g = probe(mid);
        if g == action {
            lb = mid;
        } else {
            ub = mid;
            pivot = g;
        }
    }
    AdjustedIndex {
        value: 0.5 * (lb + ub),
        pivot,
        outcome: SearchOutcome::Bracketed,
    }
}

/// Adjusted indices for every (arm, worker, state), each search fixing the
/// other workers at their decoupled index for the same state.
pub fn adjusted_index_table(
    inst: &Instance,
    decoupled: &IndexTable,
    opts: &IndexOptions,
) -> Result<IndexTable> {
    if decoupled.kind != IndexKind::Decoupled {
        return Err(Error::Config(
            "adjusted indices must start from a decoupled table".into(),
        ));
    }
    let m = inst.num_workers;
    let values = inst
        .arms
        .par_iter()
        .enumerate()
        .map(|(i, arm)| {
            let costs = &inst.costs[i];
            (0..m)
                .map(|k| {
                    (0..arm.num_states())
                        .map(|s| {
                            let fixed =
                                ChargeVector((0..m).map(|w| decoupled.get(i, w, s)).collect());
                            adjusted_index(arm, costs, s, k + 1, &fixed, opts).value
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(IndexTable {
        kind: IndexKind::Adjusted,
        values,
    })
}

/// How the adjusted index of one worker moves as another worker's charge is
/// lowered along a grid, with every remaining worker free of charge.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationProbe {
    pub grid: Vec<f64>,
    pub indices: Vec<AdjustedIndex>,
    /// Per grid point: starting with the other worker is at least as good as
    /// staying passive.
    pub other_beats_passive: Vec<bool>,
    /// Per grid point: the other worker's discounted cost is at least as high
    /// when the plan starts with that worker as when it starts with `action`.
    pub other_cost_dominates: Vec<bool>,
}

impl RelaxationProbe {
    pub fn values(&self) -> Vec<f64> {
        self.indices.iter().map(|a| a.value).collect()
    }

    pub fn conditions_hold(&self) -> bool {
        self.other_beats_passive.iter().all(|&b| b) && self.other_cost_dominates.iter().all(|&b| b)
    }

    /// True when the index sequence never rises by more than `slack`.
    pub fn is_non_increasing(&self, slack: f64) -> bool {
        self.indices
            .windows(2)
            .all(|w| w[1].value <= w[0].value + slack)
    }
}

/// Computes the adjusted index of `action` while `other`'s charge walks down
/// `grid` (strictly decreasing, usually ending at 0). Other workers are
/// charged 0.
pub fn relaxation_probe(
    arm: &ArmMdp,
    costs_row: &[f64],
    state: usize,
    action: usize,
    other: usize,
    grid: &[f64],
    opts: &IndexOptions,
) -> Result<RelaxationProbe> {
    if action == other || action == 0 || other == 0 {
        return Err(Error::Config("probe needs two distinct worker actions".into()));
    }
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] < w[0])) || !(grid[grid.len() - 1] >= 0.0) {
        return Err(Error::Config(
            "charge grid must be non-empty, strictly decreasing and non-negative".into(),
        ));
    }
    let m = costs_row.len();
    let mut probe = RelaxationProbe {
        grid: grid.to_vec(),
        indices: Vec::with_capacity(grid.len()),
        other_beats_passive: Vec::with_capacity(grid.len()),
        other_cost_dominates: Vec::with_capacity(grid.len()),
    };
    for &l in grid {
        let fixed = ChargeVector::zeros(m).with(other - 1, l);
        let idx = adjusted_index(arm, costs_row, state, action, &fixed, opts);
        let charges = fixed.with(action - 1, idx.value);
        let table = solve_expanded(arm, costs_row, &charges, &opts.dp);
        let q_other = table.q(state, other).expect("other worker is modelled");
        let q_passive = table.q(state, 0).expect("passive is modelled");
        probe.other_beats_passive.push(q_other >= q_passive - 1e-9);
        let (with_other, with_action) =
            first_action_costs(arm, costs_row, state, action, other, &table, opts);
        probe.other_cost_dominates.push(with_other >= with_action - 1e-9);
        probe.indices.push(idx);
    }
    Ok(probe)
}

/// Discounted cost of `other` under the greedy policy of `table`, when the
/// first step takes `other` versus `action`.
fn first_action_costs(
    arm: &ArmMdp,
    costs_row: &[f64],
    state: usize,
    action: usize,
    other: usize,
    table: &ValueTable,
    opts: &IndexOptions,
) -> (f64, f64) {
    let c = costs_row[other - 1];
    let per_state: Vec<f64> = table
        .greedy
        .iter()
        .map(|&a| if a == other { c } else { 0.0 })
        .collect();
    let future = evaluate_policy(arm, &table.greedy, &per_state, &opts.dp);
    let start = |a: usize| {
        let own = if a == other { c } else { 0.0 };
        own + opts.dp.discount
            * arm.transition(a)[state]
                .iter()
                .zip(&future)
                .map(|(p, v)| p * v)
                .sum::<f64>()
    };
    (start(other), start(action))
}
