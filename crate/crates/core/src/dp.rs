//! Discounted value iteration for a single arm.
//!
//! Two models are solved: the restricted two-action MDP (passive vs. one
//! worker, the worker's reward reduced by `charge * cost`) and the expanded
//! MDP with every worker available, each charged separately.

use std::ops::{Deref, DerefMut};

use crate::model::{ArmMdp, Matrix};

/// Settings shared by every value iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpOptions {
    pub discount: f64,
    /// Target sup-norm distance between the returned values and the fixed point.
    pub tol: f64,
    pub max_iter: usize,
}

impl DpOptions {
    pub const DEFAULT_TOL: f64 = 1e-9;
    pub const DEFAULT_MAX_ITER: usize = 100_000;

    pub fn new(discount: f64) -> Self {
        Self {
            discount,
            tol: Self::DEFAULT_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    /// Residual at which iteration stops: `tol * (1 - b) / (2 b)` bounds the
    /// distance to the fixed point by `tol / 2`.
    pub fn stopping_residual(&self) -> f64 {
        self.tol * (1.0 - self.discount) / (2.0 * self.discount)
    }
}

/// Per-worker charges `λ_k`, indexed by zero-based worker.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeVector(pub Vec<f64>);

impl ChargeVector {
    pub fn uniform(num_workers: usize, value: f64) -> Self {
        Self(vec![value; num_workers])
    }

    pub fn zeros(num_workers: usize) -> Self {
        Self::uniform(num_workers, 0.0)
    }

    /// Copy with worker `k`'s charge replaced.
    pub fn with(&self, worker: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.0[worker] = value;
        out
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Deref for ChargeVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ChargeVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Result of a value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f64>,
    /// `q_values[s][col]`; column `col` is action `actions[col]`.
    pub q_values: Vec<Vec<f64>>,
    /// Action index of each column, ascending.
    pub actions: Vec<usize>,
    /// Greedy action index per state. Ties go to the smaller action index.
    pub greedy: Vec<usize>,
    pub iterations: usize,
    /// False when `max_iter` ran out before the tolerance was met.
    pub converged: bool,
}

impl ValueTable {
    /// Q-value of `action` at `state`, if the action is part of the model.
    pub fn q(&self, state: usize, action: usize) -> Option<f64> {
        let col = self.actions.iter().position(|&a| a == action)?;
        Some(self.q_values[state][col])
    }
}

/// An arm's MDP restricted to a subset of actions with per-action rewards.
struct Model<'a> {
    actions: Vec<usize>,
    /// `rewards[col][s]`
    rewards: Vec<Vec<f64>>,
    matrices: Vec<&'a Matrix>,
}

impl<'a> Model<'a> {
    fn restricted(arm: &'a ArmMdp, action: usize, cost: f64, charge: f64) -> Self {
        let active: Vec<f64> = arm.rewards.iter().map(|r| r - charge * cost).collect();
        Self {
            actions: vec![0, action],
            rewards: vec![arm.rewards.clone(), active],
            matrices: vec![arm.transition(0), arm.transition(action)],
        }
    }

    fn expanded(arm: &'a ArmMdp, costs_row: &[f64], charges: &[f64]) -> Self {
        assert_eq!(costs_row.len(), charges.len(), "one charge per worker");
        let mut rewards = vec![arm.rewards.clone()];
        for (c, l) in costs_row.iter().zip(charges) {
            rewards.push(arm.rewards.iter().map(|r| r - l * c).collect());
        }
        Self {
            actions: (0..=costs_row.len()).collect(),
            rewards,
            matrices: arm.transitions.iter().take(costs_row.len() + 1).collect(),
        }
    }

    fn num_states(&self) -> usize {
        self.rewards[0].len()
    }

    /// One Bellman backup. Fills `q` from `v` and returns the new values.
    fn backup(&self, v: &[f64], discount: f64, q: &mut [Vec<f64>], next: &mut [f64]) {
        for s in 0..self.num_states() {
            let mut best = f64::NEG_INFINITY;
            for (col, m) in self.matrices.iter().enumerate() {
                let ev: f64 = m[s].iter().zip(v).map(|(p, x)| p * x).sum();
                let val = self.rewards[col][s] + discount * ev;
                q[s][col] = val;
                if val > best {
                    best = val;
                }
            }
            next[s] = best;
        }
    }

    fn solve(&self, opts: &DpOptions) -> ValueTable {
        let n = self.num_states();
        let cols = self.actions.len();
        let stop = opts.stopping_residual();
        let mut v = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut q = vec![vec![0.0; cols]; n];
        let mut converged = false;
        let mut iterations = 0;
        while iterations < opts.max_iter {
            self.backup(&v, opts.discount, &mut q, &mut next);
            iterations += 1;
            let residual = v
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut v, &mut next);
            if residual <= stop {
                converged = true;
                break;
            }
        }
        let greedy = q
            .iter()
            .map(|row| {
                let mut best = 0;
                for col in 1..cols {
                    if row[col] > row[best] {
                        best = col;
                    }
                }
                self.actions[best]
            })
            .collect();
        ValueTable {
            values: v,
            q_values: q,
            actions: self.actions.clone(),
            greedy,
            iterations,
            converged,
        }
    }
}

/// Solves the two-action MDP {passive, `action`}, charging `charge * cost`
/// per use of the worker. Columns of `q_values` are (passive, active).
pub fn solve_restricted(
    arm: &ArmMdp,
    action: usize,
    cost: f64,
    charge: f64,
    opts: &DpOptions,
) -> ValueTable {
    assert!(action >= 1 && action < arm.num_actions(), "worker action out of range");
    Model::restricted(arm, action, cost, charge).solve(opts)
}

/// Solves the MDP with the passive action and every worker, worker `k`
/// charged `charges[k] * costs_row[k]` per use.
pub fn solve_expanded(
    arm: &ArmMdp,
    costs_row: &[f64],
    charges: &ChargeVector,
    opts: &DpOptions,
) -> ValueTable {
    Model::expanded(arm, costs_row, charges).solve(opts)
}

/// Sup-norm changes of the first `sweeps` expanded-MDP backups from `V = 0`.
pub fn bellman_residuals(
    arm: &ArmMdp,
    costs_row: &[f64],
    charges: &ChargeVector,
    discount: f64,
    sweeps: usize,
) -> Vec<f64> {
    let model = Model::expanded(arm, costs_row, charges);
    let n = model.num_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut q = vec![vec![0.0; model.actions.len()]; n];
    (0..sweeps)
        .map(|_| {
            model.backup(&v, discount, &mut q, &mut next);
            let r = v
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut v, &mut next);
            r
        })
        .collect()
}

/// Discounted value of a fixed stationary policy with per-state
/// rewards `reward[s]` and per-state action `policy[s]`, by iteration.
pub fn evaluate_policy(
    arm: &ArmMdp,
    policy: &[usize],
    reward: &[f64],
    opts: &DpOptions,
) -> Vec<f64> {
    let n = arm.num_states();
    let stop = opts.stopping_residual();
    let mut v = vec![0.0; n];
    for _ in 0..opts.max_iter {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                let row = &arm.transition(policy[s])[s];
                reward[s] + opts.discount * row.iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
            })
            .collect();
        let residual = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual <= stop {
            break;
        }
    }
    v
}
