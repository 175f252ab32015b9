//! Problem instances: arms, workers, costs and the per-round allocation type.
//!
//! Action indices follow one convention everywhere in the crate: action `0`
//! is the passive (no-intervention) action and action `k + 1` is worker `k`.
//! Cost matrices, index tables and charge vectors are indexed by the
//! zero-based worker `k`; the passive cost is implicitly zero and never
//! stored.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for transition matrices.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Square transition matrix, `m[s][s2]` is the probability of moving from
/// `s` to `s2`.
pub type Matrix = Vec<Vec<f64>>;

/// One arm: a finite MDP whose transitions depend on which worker (if any)
/// acts on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmMdp {
    /// Reward collected while the arm sits in each state.
    pub rewards: Vec<f64>,
    /// One matrix per action; `transitions[0]` is the passive dynamics.
    pub transitions: Vec<Matrix>,
}

impl ArmMdp {
    pub fn new(rewards: Vec<f64>, transitions: Vec<Matrix>) -> Self {
        Self {
            rewards,
            transitions,
        }
    }

    pub fn num_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn num_actions(&self) -> usize {
        self.transitions.len()
    }

    pub fn transition(&self, action: usize) -> &Matrix {
        &self.transitions[action]
    }

    /// `max R - min R`.
    pub fn reward_spread(&self) -> f64 {
        let max = self.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.rewards.iter().copied().fold(f64::INFINITY, f64::min);
        if self.rewards.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    /// True when the two actions have entrywise equal matrices within `tol`.
    pub fn same_dynamics(&self, a: usize, b: usize, tol: f64) -> bool {
        self.transitions[a]
            .iter()
            .zip(&self.transitions[b])
            .all(|(ra, rb)| ra.iter().zip(rb).all(|(x, y)| (x - y).abs() <= tol))
    }
}

/// A multi-worker restless bandit instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub arms: Vec<ArmMdp>,
    pub num_workers: usize,
    /// `costs[i][k]` is the cost of worker `k` acting on arm `i`.
    pub costs: Vec<Vec<f64>>,
    /// Per-worker, per-round budget.
    pub budget: f64,
    /// Largest tolerated gap between the most and least loaded worker.
    pub fairness_eps: f64,
    pub discount: f64,
}

impl Instance {
    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn max_cost(&self) -> f64 {
        self.costs
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Costs as integers, or an error naming the first fractional entry.
    pub fn integer_costs(&self) -> Result<Vec<Vec<u64>>> {
        self.costs
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(k, &c)| {
                        if c >= 0.0 && (c - c.round()).abs() <= 1e-9 {
                            Ok(c.round() as u64)
                        } else {
                            Err(Error::NonIntegerCost {
                                arm: i,
                                worker: k + 1,
                                value: c,
                            })
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_instance(self)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&InstanceDoc::from(self))
            .expect("instance documents always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        checked(doc.into())
    }
}

/// A single broken invariant found by [`validate_instance`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoArms,
    NoWorkers,
    NoStates { arm: usize },
    NonFiniteReward { arm: usize, state: usize },
    ActionCount { arm: usize, expected: usize, found: usize },
    MatrixShape { arm: usize, action: usize },
    ProbabilityRange { arm: usize, action: usize, row: usize, col: usize, value: f64 },
    RowSum { arm: usize, action: usize, row: usize, sum: f64 },
    CostCount { arm: usize, expected: usize, found: usize },
    NonPositiveCost { arm: usize, worker: usize, value: f64 },
    BudgetBelowMaxCost { budget: f64, max_cost: f64 },
    FairnessBelowMaxCost { eps: f64, max_cost: f64 },
    Discount { value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match *self {
            NoArms => write!(f, "instance has no arms"),
            NoWorkers => write!(f, "instance has no workers"),
            NoStates { arm } => write!(f, "arm {arm} has no states"),
            NonFiniteReward { arm, state } => {
                write!(f, "arm {arm} has a non-finite reward in state {state}")
            }
            ActionCount { arm, expected, found } => write!(
                f,
                "arm {arm} lists {found} transition matrices, expected {expected}"
            ),
            MatrixShape { arm, action } => write!(
                f,
                "arm {arm}, action {action}: transition matrix is not square over the arm's states"
            ),
            ProbabilityRange {
                arm,
                action,
                row,
                col,
                value,
            } => write!(
                f,
                "arm {arm}, action {action}, row {row}: entry {col} = {value} lies outside [0, 1]"
            ),
            RowSum {
                arm,
                action,
                row,
                sum,
            } => write!(f, "arm {arm}, action {action}, row {row}: row sums to {sum}"),
            CostCount { arm, expected, found } => {
                write!(f, "arm {arm} lists {found} costs, expected {expected}")
            }
            NonPositiveCost { arm, worker, value } => {
                write!(f, "arm {arm}, worker {worker}: cost {value} is not positive")
            }
            BudgetBelowMaxCost { budget, max_cost } => {
                write!(f, "budget {budget} below max cost {max_cost}")
            }
            FairnessBelowMaxCost { eps, max_cost } => {
                write!(f, "fairness_eps below max cost ({eps} < {max_cost})")
            }
            Discount { value } => write!(f, "discount {value} is outside (0, 1)"),
        }
    }
}

/// Lists every broken invariant; an empty list means the instance is valid.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let m = inst.num_workers;
    if inst.arms.is_empty() {
        out.push(Violation::NoArms);
    }
    if m == 0 {
        out.push(Violation::NoWorkers);
    }
    if inst.costs.len() != inst.arms.len() {
        out.push(Violation::CostCount {
            arm: inst.costs.len().min(inst.arms.len()),
            expected: inst.arms.len(),
            found: inst.costs.len(),
        });
    }
    for (i, arm) in inst.arms.iter().enumerate() {
        let n = arm.num_states();
        if n == 0 {
            out.push(Violation::NoStates { arm: i });
        }
        for (s, r) in arm.rewards.iter().enumerate() {
            if !r.is_finite() {
                out.push(Violation::NonFiniteReward { arm: i, state: s });
            }
        }
        if arm.transitions.len() != m + 1 {
            out.push(Violation::ActionCount {
                arm: i,
                expected: m + 1,
                found: arm.transitions.len(),
            });
        }
        for (a, mat) in arm.transitions.iter().enumerate() {
            if mat.len() != n || mat.iter().any(|row| row.len() != n) {
                out.push(Violation::MatrixShape { arm: i, action: a });
                continue;
            }
            for (row_idx, row) in mat.iter().enumerate() {
                for (col, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        out.push(Violation::ProbabilityRange {
                            arm: i,
                            action: a,
                            row: row_idx,
                            col,
                            value: p,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                    out.push(Violation::RowSum {
                        arm: i,
                        action: a,
                        row: row_idx,
                        sum,
                    });
                }
            }
        }
        if let Some(row) = inst.costs.get(i) {
            if row.len() != m {
                out.push(Violation::CostCount {
                    arm: i,
                    expected: m,
                    found: row.len(),
                });
            }
            for (k, &c) in row.iter().enumerate() {
                if !(c > 0.0 && c.is_finite()) {
                    out.push(Violation::NonPositiveCost {
                        arm: i,
                        worker: k + 1,
                        value: c,
                    });
                }
            }
        }
    }
    let max_cost = inst.max_cost();
    if max_cost.is_finite() {
        if !(inst.budget >= max_cost) {
            out.push(Violation::BudgetBelowMaxCost {
                budget: inst.budget,
                max_cost,
            });
        }
        if !(inst.fairness_eps >= max_cost) {
            out.push(Violation::FairnessBelowMaxCost {
                eps: inst.fairness_eps,
                max_cost,
            });
        }
    }
    if !(inst.discount > 0.0 && inst.discount < 1.0) {
        out.push(Violation::Discount {
            value: inst.discount,
        });
    }
    out
}

/// One round's assignment of arms to workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// `assignments[k]` holds the arms worked by worker `k`.
    pub assignments: Vec<BTreeSet<usize>>,
    pub per_worker_cost: Vec<f64>,
}

impl Allocation {
    pub fn empty(num_workers: usize) -> Self {
        Self {
            assignments: vec![BTreeSet::new(); num_workers],
            per_worker_cost: vec![0.0; num_workers],
        }
    }

    /// Builds an allocation from per-arm action indices (`0` = passive).
    pub fn from_actions(actions: &[usize], costs: &[Vec<f64>], num_workers: usize) -> Self {
        let mut alloc = Self::empty(num_workers);
        for (arm, &a) in actions.iter().enumerate() {
            if a > 0 {
                alloc.assign(arm, a - 1, costs[arm][a - 1]);
            }
        }
        alloc
    }

    pub(crate) fn assign(&mut self, arm: usize, worker: usize, cost: f64) {
        self.assignments[worker].insert(arm);
        self.per_worker_cost[worker] += cost;
    }

    pub fn num_workers(&self) -> usize {
        self.assignments.len()
    }

    /// Action index per arm; unassigned arms are passive.
    pub fn actions(&self, num_arms: usize) -> Vec<usize> {
        let mut actions = vec![0; num_arms];
        for (k, arms) in self.assignments.iter().enumerate() {
            for &i in arms {
                actions[i] = k + 1;
            }
        }
        actions
    }

    pub fn counts(&self) -> Vec<usize> {
        self.assignments.iter().map(BTreeSet::len).collect()
    }

    /// Checks disjointness, cost bookkeeping and the budget.
    pub fn check(&self, costs: &[Vec<f64>], budget: f64) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for (k, arms) in self.assignments.iter().enumerate() {
            let mut total = 0.0;
            for &i in arms {
                if !seen.insert(i) {
                    return Err(format!("arm {i} assigned to more than one worker"));
                }
                total += costs[i][k];
            }
            if (total - self.per_worker_cost[k]).abs() > 1e-9 {
                return Err(format!(
                    "worker {} cost recorded as {} but assignments cost {total}",
                    k + 1,
                    self.per_worker_cost[k]
                ));
            }
            if total > budget + 1e-9 {
                return Err(format!("worker {} spends {total} > budget {budget}", k + 1));
            }
        }
        Ok(())
    }
}

/// `max_k cost_k - min_k cost_k`, counting idle workers at cost zero.
pub fn fairness_gap(alloc: &Allocation) -> f64 {
    let costs = &alloc.per_worker_cost;
    if costs.is_empty() {
        return 0.0;
    }
    let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    num_workers: usize,
    budget: f64,
    fairness_eps: f64,
    discount: f64,
    arms: Vec<ArmDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmDoc {
    rewards: Vec<f64>,
    transitions: Vec<Matrix>,
    costs: Vec<f64>,
}

impl From<&Instance> for InstanceDoc {
    fn from(inst: &Instance) -> Self {
        Self {
            num_workers: inst.num_workers,
            budget: inst.budget,
            fairness_eps: inst.fairness_eps,
            discount: inst.discount,
            arms: inst
                .arms
                .iter()
                .zip(&inst.costs)
                .map(|(arm, costs)| ArmDoc {
                    rewards: arm.rewards.clone(),
                    transitions: arm.transitions.clone(),
                    costs: costs.clone(),
                })
                .collect(),
        }
    }
}

impl From<InstanceDoc> for Instance {
    fn from(doc: InstanceDoc) -> Self {
        let (arms, costs) = doc
            .arms
            .into_iter()
            .map(|a| (ArmMdp::new(a.rewards, a.transitions), a.costs))
            .unzip();
        Self {
            arms,
            num_workers: doc.num_workers,
            costs,
            budget: doc.budget,
            fairness_eps: doc.fairness_eps,
            discount: doc.discount,
        }
    }
}

fn checked(inst: Instance) -> Result<Instance> {
    let violations = validate_instance(&inst);
    if violations.is_empty() {
        Ok(inst)
    } else {
        Err(Error::Invalid(violations))
    }
}

/// Reads and validates an instance document.
pub fn load_instance<R: Read>(source: R) -> Result<Instance> {
    let doc: InstanceDoc = serde_json::from_reader(source)?;
    checked(doc.into())
}

pub fn save_instance<W: Write>(inst: &Instance, mut sink: W) -> Result<()> {
    sink.write_all(inst.to_json().as_bytes())?;
    Ok(())
}
