//! Reference computations shared by the integration tests. Everything here
//! is deliberately naive: exhaustive policy enumeration with exact linear
//! solves instead of value iteration.

#![allow(dead_code)]

use mwrmab::{ArmMdp, Instance};
use rand::Rng;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Exact discounted value of a stationary policy; `reward[s][a]` is the
/// one-step reward of action `a` in state `s`.
pub fn policy_value(arm: &ArmMdp, policy: &[usize], reward: &[Vec<f64>], beta: f64) -> Vec<f64> {
    let n = arm.num_states();
    let a = (0..n)
        .map(|s| {
            (0..n)
                .map(|t| {
                    let id = if s == t { 1.0 } else { 0.0 };
                    id - beta * arm.transitions[policy[s]][s][t]
                })
                .collect()
        })
        .collect();
    let b = (0..n).map(|s| reward[s][policy[s]]).collect();
    gauss(a, b)
}

/// Optimal values and Q-values over the actions in `allowed`, by trying
/// every deterministic stationary policy. The optimum dominates every other
/// policy in every state, so the state-wise maximum is attained.
pub fn enumerate_optimum(
    arm: &ArmMdp,
    allowed: &[usize],
    reward: &[Vec<f64>],
    beta: f64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = arm.num_states();
    let mut best = vec![f64::NEG_INFINITY; n];
    let total = allowed.len().pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let policy: Vec<usize> = (0..n)
            .map(|_| {
                let a = allowed[c % allowed.len()];
                c /= allowed.len();
                a
            })
            .collect();
        let v = policy_value(arm, &policy, reward, beta);
        for s in 0..n {
            best[s] = best[s].max(v[s]);
        }
    }
    let q = (0..n)
        .map(|s| {
            (0..arm.num_actions())
                .map(|a| {
                    reward[s][a]
                        + beta
                            * arm.transitions[a][s]
                                .iter()
                                .zip(&best)
                                .map(|(p, v)| p * v)
                                .sum::<f64>()
                })
                .collect()
        })
        .collect();
    (best, q)
}

/// Rewards with `charges[k] * costs[k]` subtracted from worker `k`'s action.
pub fn charged_rewards(arm: &ArmMdp, costs: &[f64], charges: &[f64]) -> Vec<Vec<f64>> {
    (0..arm.num_states())
        .map(|s| {
            (0..arm.num_actions())
                .map(|a| {
                    let charge = if a == 0 { 0.0 } else { charges[a - 1] * costs[a - 1] };
                    arm.rewards[s] - charge
                })
                .collect()
        })
        .collect()
}

/// Two-state arm with reward in state 1; each worker reaches state 1 at
/// least as often as the passive action.
pub fn random_arm<R: Rng>(rng: &mut R, workers: usize) -> ArmMdp {
    let p0 = [rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5)];
    let row = |p: f64| vec![1.0 - p, p];
    let mut transitions = vec![vec![row(p0[0]), row(p0[1])]];
    for _ in 0..workers {
        let p = [rng.gen_range(p0[0]..0.95), rng.gen_range(p0[1]..0.95)];
        transitions.push(vec![row(p[0]), row(p[1])]);
    }
    ArmMdp::new(vec![0.0, 1.0], transitions)
}

/// Every feasible action profile (one action per arm) with its total gain,
/// by brute force over `(M + 1)^N` profiles.
pub fn best_profile_gain(gains: &[Vec<f64>], costs: &[Vec<u64>], budget: u64) -> f64 {
    let n = gains.len();
    let m = costs.first().map_or(0, Vec::len);
    let mut best = 0.0f64;
    for code in 0..(m + 1).pow(n as u32) {
        let mut c = code;
        let mut spent = vec![0u64; m];
        let mut total = 0.0;
        for i in 0..n {
            let a = c % (m + 1);
            c /= m + 1;
            if a > 0 {
                spent[a - 1] += costs[i][a - 1];
                total += gains[i][a - 1];
            }
        }
        if spent.iter().all(|&s| s <= budget) {
            best = best.max(total);
        }
    }
    best
}

pub fn unit_instance(arms: Vec<ArmMdp>, workers: usize, budget: f64) -> Instance {
    let n = arms.len();
    Instance {
        arms,
        num_workers: workers,
        costs: vec![vec![1.0; workers]; n],
        budget,
        fairness_eps: 1.0,
        discount: 0.95,
    }
}
