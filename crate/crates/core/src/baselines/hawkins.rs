//! Lagrangian baseline: per-worker multipliers from the discounted dual,
//! then an exact knapsack over charge-adjusted Q-value gains each round.

use rayon::prelude::*;

use crate::decoupled::init_bs_bounds;
use crate::dp::{solve_expanded, ChargeVector, DpOptions, ValueTable};
use crate::error::{Error, Result};
use crate::model::{Allocation, Instance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HawkinsOptions {
    /// Stop once a full pass improves the dual by less than this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Largest knapsack table, in cells, before failing with a size error.
    pub cell_cap: u128,
    pub dp: DpOptions,
}

impl HawkinsOptions {
    pub fn new(discount: f64) -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 50,
            cell_cap: 10_000_000,
            dp: DpOptions::new(discount),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HawkinsLambda {
    pub lambda: ChargeVector,
    pub dual: f64,
    pub sweeps: usize,
    /// False if the sweep cap was reached first.
    pub converged: bool,
}

/// Discounted Lagrangian dual at `lambda` from the given arm states:
/// `sum_i V_i(s_i; lambda) + sum_k lambda_k * B / (1 - discount)`.
pub fn hawkins_dual(inst: &Instance, states: &[usize], lambda: &ChargeVector, dp: &DpOptions) -> f64 {
    let per_arm: Vec<f64> = inst
        .arms
        .par_iter()
        .zip(&inst.costs)
        .zip(states)
        .map(|((arm, costs), &s)| solve_expanded(arm, costs, lambda, dp).values[s])
        .collect();
    let slack = inst.budget / (1.0 - dp.discount);
    per_arm.iter().sum::<f64>() + lambda.iter().map(|l| l * slack).sum::<f64>()
}

/// Upper end of the search box per worker: beyond it no arm uses the worker.
fn charge_box(inst: &Instance, discount: f64) -> Vec<f64> {
    (0..inst.num_workers)
        .map(|k| {
            inst.arms
                .iter()
                .zip(&inst.costs)
                .map(|(arm, c)| init_bs_bounds(arm, c[k], discount).1)
                .fold(0.0, f64::max)
        })
        .collect()
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes `f` along `x + t * dir` inside the box, returning the best
/// point found and its value. Never returns something worse than `x`.
fn line_search<F: Fn(&ChargeVector) -> f64>(
    f: &F,
    x: &ChargeVector,
    fx: f64,
    dir: &[f64],
    upper: &[f64],
) -> (ChargeVector, f64) {
    let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for ((&xi, &di), &ui) in x.iter().zip(dir).zip(upper) {
        if di > 0.0 {
            t_lo = t_lo.max(-xi / di);
            t_hi = t_hi.min((ui - xi) / di);
        } else if di < 0.0 {
            t_lo = t_lo.max((ui - xi) / di);
            t_hi = t_hi.min(-xi / di);
        }
    }
    if !(t_hi > t_lo) {
        return (x.clone(), fx);
    }
    let at = |t: f64| {
        ChargeVector(
            x.iter()
                .zip(dir)
                .zip(upper)
                .map(|((&xi, &di), &ui)| (xi + t * di).clamp(0.0, ui))
                .collect(),
        )
    };
    let eval = |t: f64| f(&at(t));

    let width_tol = 1e-9 * (1.0 + t_hi - t_lo);
    let (mut a, mut b) = (t_lo, t_hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    while b - a > width_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
        }
    }
    let mut best = (x.clone(), fx);
    for (t, ft) in [(t_lo, eval(t_lo)), (t_hi, eval(t_hi)), (c, fc), (d, fd)] {
        if ft < best.1 {
            best = (at(t), ft);
        }
    }
    best
}

/// Multipliers minimizing the discounted dual by coordinate descent with
/// golden-section line searches over `[0, ub_k]`.
///
/// When a pass over the coordinates stalls, pairwise diagonal directions are
/// tried before stopping; the dual is piecewise linear and coordinate moves
/// alone can stall on a ridge.
pub fn hawkins_lambda(inst: &Instance, states: &[usize], opts: &HawkinsOptions) -> HawkinsLambda {
    let m = inst.num_workers;
    let upper = charge_box(inst, opts.dp.discount);
    let f = |l: &ChargeVector| hawkins_dual(inst, states, l, &opts.dp);

    let mut x = ChargeVector::zeros(m);
    let mut fx = f(&x);
    let unit = |k: usize| -> Vec<f64> { (0..m).map(|w| if w == k { 1.0 } else { 0.0 }).collect() };
    let mut diagonals = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            for sign in [1.0, -1.0] {
                diagonals.push(
                    (0..m)
                        .map(|w| match w {
                            _ if w == a => 1.0,
                            _ if w == b => sign,
                            _ => 0.0,
                        })
                        .collect::<Vec<f64>>(),
                );
            }
        }
    }

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let start = fx;
        for k in 0..m {
            (x, fx) = line_search(&f, &x, fx, &unit(k), &upper);
        }
        if start - fx < opts.tol {
            let before = fx;
            for dir in &diagonals {
                (x, fx) = line_search(&f, &x, fx, dir, &upper);
            }
            if before - fx < opts.tol {
                converged = true;
                break;
            }
        }
    }
    // The dual is flat in a worker's multiplier while its budget is slack;
    // prefer zero there.
    for k in 0..m {
        if x[k] > 0.0 {
            let zeroed = x.with(k, 0.0);
            let fz = f(&zeroed);
            if fz <= fx + opts.tol {
                (x, fx) = (zeroed, fz);
            }
        }
    }
    HawkinsLambda {
        lambda: x,
        dual: fx,
        sweeps,
        converged,
    }
}

/// Exact knapsack over per-arm gains: chooses at most one worker per arm to
/// maximize the total gain with every worker's integer cost within
/// `budget`. Ties go to the passive action, then to lower workers.
///
/// `gains[i][k]` is the benefit of worker `k` on arm `i` over passivity.
pub fn knapsack_allocate(
    gains: &[Vec<f64>],
    costs: &[Vec<u64>],
    budget: u64,
    cell_cap: u128,
) -> Result<Allocation> {
    let n = gains.len();
    let m = costs.first().map_or(0, Vec::len);
    let radix = budget as u128 + 1;
    let cells = radix.pow(m as u32) * (n as u128 + 1);
    if cells > cell_cap {
        return Err(Error::Size {
            what: "knapsack table",
            size: cells,
            cap: cell_cap,
        });
    }
    let width = radix.pow(m as u32) as usize;
    let stride: Vec<usize> = (0..m).map(|k| (radix as usize).pow(k as u32)).collect();
    let digit = |r: usize, k: usize| (r / stride[k]) % radix as usize;

    // best[i][r]: optimal gain from arms i.. with remaining budgets r.
    let mut best = vec![vec![0.0f64; width]; n + 1];
    let candidate = |best_next: &[f64], i: usize, k: usize, r: usize| -> Option<f64> {
        let c = costs[i][k] as usize;
        (digit(r, k) >= c).then(|| gains[i][k] + best_next[r - c * stride[k]])
    };
    for i in (0..n).rev() {
        let (head, tail) = best.split_at_mut(i + 1);
        let next = &tail[0];
        let cur = &mut head[i];
        for r in 0..width {
            let mut v = next[r];
            for k in 0..m {
                if let Some(c) = candidate(next, i, k, r) {
                    if c > v {
                        v = c;
                    }
                }
            }
            cur[r] = v;
        }
    }

    let mut alloc = Allocation::empty(m);
    let mut r = width - 1;
    for i in 0..n {
        let target = best[i][r];
        if best[i + 1][r] == target {
            continue;
        }
        let k = (0..m)
            .find(|&k| candidate(&best[i + 1], i, k, r) == Some(target))
            .expect("optimal action is reproducible");
        alloc.assign(i, k, costs[i][k] as f64);
        r -= costs[i][k] as usize * stride[k];
    }
    Ok(alloc)
}

/// Gains `Q(s_i, k) - Q(s_i, passive)` from per-arm expanded value tables.
pub fn q_gains(tables: &[ValueTable], states: &[usize]) -> Vec<Vec<f64>> {
    tables
        .iter()
        .zip(states)
        .map(|(t, &s)| {
            let row = &t.q_values[s];
            row[1..].iter().map(|q| q - row[0]).collect()
        })
        .collect()
}

/// Per-arm expanded value tables at the multipliers.
pub fn charged_tables(inst: &Instance, lambda: &ChargeVector, dp: &DpOptions) -> Vec<ValueTable> {
    inst.arms
        .par_iter()
        .zip(&inst.costs)
        .map(|(arm, costs)| solve_expanded(arm, costs, lambda, dp))
        .collect()
}

/// Knapsack allocation for the current states at multipliers `lambda`.
pub fn hawkins_allocate(
    inst: &Instance,
    states: &[usize],
    lambda: &ChargeVector,
    opts: &HawkinsOptions,
) -> Result<Allocation> {
    let costs = inst.integer_costs()?;
    let tables = charged_tables(inst, lambda, &opts.dp);
    knapsack_allocate(
        &q_gains(&tables, states),
        &costs,
        inst.budget.floor() as u64,
        opts.cell_cap,
    )
}
