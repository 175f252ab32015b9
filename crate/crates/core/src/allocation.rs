//! Per-round assignment of arms to workers from index values.

use crate::decoupled::IndexTable;
use crate::error::{Error, Result};
use crate::model::{Allocation, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocationOptions {
    /// Leave arms whose index for a worker is negative out of that worker's
    /// candidates. A negative index means acting is worse than passivity.
    pub skip_negative_indices: bool,
}

impl Default for AllocationOptions {
    fn default() -> Self {
        Self {
            skip_negative_indices: true,
        }
    }
}

/// One round's input: index values at the current arm states.
#[derive(Debug, Clone)]
pub struct RoundInput<'a> {
    /// `index[i][k]`: index of worker `k` on arm `i` at its current state.
    pub index: Vec<Vec<f64>>,
    pub costs: &'a [Vec<f64>],
    pub budget: f64,
}

impl<'a> RoundInput<'a> {
    pub fn new(index: Vec<Vec<f64>>, costs: &'a [Vec<f64>], budget: f64) -> Self {
        Self {
            index,
            costs,
            budget,
        }
    }

    /// Reads the table at the given arm states, checking them against the instance.
    pub fn from_table(inst: &'a Instance, table: &IndexTable, states: &[usize]) -> Result<Self> {
        if states.len() != inst.num_arms() {
            return Err(Error::Config(format!(
                "{} states given for {} arms",
                states.len(),
                inst.num_arms()
            )));
        }
        for (i, (&s, arm)) in states.iter().zip(&inst.arms).enumerate() {
            if s >= arm.num_states() {
                return Err(Error::Config(format!("arm {i} has no state {s}")));
            }
        }
        Ok(Self::new(table.at_states(states), &inst.costs, inst.budget))
    }

    fn num_workers(&self) -> usize {
        self.costs.first().map_or(0, Vec::len)
    }

    fn candidate(&self, arm: usize, worker: usize, opts: &AllocationOptions) -> bool {
        !(opts.skip_negative_indices && self.index[arm][worker] < 0.0)
    }
}

/// Round-robin balanced allocation.
///
/// Each worker ranks arms by its own index (ties: lower arm first). Workers
/// are visited in order of their best index (ties: lower worker first); on
/// each turn a worker takes its best unallocated arm that still fits its
/// remaining budget. A worker that finds no such arm drops out for good. The
/// round ends when nobody can take an arm.
pub fn balanced_allocation(input: &RoundInput<'_>, opts: &AllocationOptions) -> Allocation {
    let n = input.index.len();
    let m = input.num_workers();
    let mut alloc = Allocation::empty(m);

    let orders: Vec<Vec<usize>> = (0..m)
        .map(|k| {
            let mut arms: Vec<usize> = (0..n).filter(|&i| input.candidate(i, k, opts)).collect();
            arms.sort_by(|&a, &b| input.index[b][k].total_cmp(&input.index[a][k]).then(a.cmp(&b)));
            arms
        })
        .collect();

    let top = |k: usize| orders[k].first().map_or(f64::NEG_INFINITY, |&i| input.index[i][k]);
    let mut sigma: Vec<usize> = (0..m).collect();
    sigma.sort_by(|&a, &b| top(b).total_cmp(&top(a)).then(a.cmp(&b)));

    let mut taken = vec![false; n];
    let mut cursor = vec![0usize; m];
    let mut active = vec![true; m];
    let mut remaining = n;

    while remaining > 0 {
        let mut progress = false;
        for &k in &sigma {
            if !active[k] || remaining == 0 {
                continue;
            }
            let order = &orders[k];
            // Arms passed over here are allocated or unaffordable; budgets
            // only shrink, so they never become eligible again.
            let mut pick = None;
            while cursor[k] < order.len() {
                let i = order[cursor[k]];
                cursor[k] += 1;
                if !taken[i]
                    && alloc.per_worker_cost[k] + input.costs[i][k] <= input.budget
                {
                    pick = Some(i);
                    break;
                }
            }
            match pick {
                Some(i) => {
                    taken[i] = true;
                    remaining -= 1;
                    alloc.assign(i, k, input.costs[i][k]);
                    progress = true;
                }
                None => active[k] = false,
            }
        }
        if !progress {
            break;
        }
    }
    alloc
}

/// Greedy allocation: walks all (arm, worker) pairs by descending index
/// (ties: lower arm, then lower worker) and assigns each pair whose arm is
/// still free and whose cost fits the worker's remaining budget.
pub fn greedy_allocation(input: &RoundInput<'_>, opts: &AllocationOptions) -> Allocation {
    let n = input.index.len();
    let m = input.num_workers();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..m).map(move |k| (i, k)))
        .filter(|&(i, k)| input.candidate(i, k, opts))
        .collect();
    pairs.sort_by(|&(i, k), &(i2, k2)| {
        input.index[i2][k2]
            .total_cmp(&input.index[i][k])
            .then(i.cmp(&i2))
            .then(k.cmp(&k2))
    });
    let mut alloc = Allocation::empty(m);
    let mut taken = vec![false; n];
    for (i, k) in pairs {
        if !taken[i] && alloc.per_worker_cost[k] + input.costs[i][k] <= input.budget {
            taken[i] = true;
            alloc.assign(i, k, input.costs[i][k]);
        }
    }
    alloc
}
